import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from nirdd.bias import (BandInfeasibleError, DistributionBand, build_band, dkw_radius, empirical_cdf,
                        worst_case_bias)
from nirdd.grids import build_running_grid
from nirdd.noise import BinomialNoise, GaussianNoise
from nirdd.targets import TargetSpec
from nirdd.weights import HPair


def test_dkw_radius_examples():
    # alpha_n = min(0.05, n^(-1/4)) equals 0.05 for every n <= 160000
    assert dkw_radius(16) == pytest.approx(math.sqrt(math.log(40) / 32), abs=1e-12)
    assert dkw_radius(160000) == pytest.approx(0.003395, abs=1e-6)
    assert dkw_radius(10 ** 8) == pytest.approx(math.sqrt(math.log(200) / (2 * 10 ** 8)), rel=1e-12)


def test_empirical_cdf_at_own_points():
    s = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(empirical_cdf(s, s), [1 / 3, 2 / 3, 1.0])


def test_band_layout():
    m = GaussianNoise(1.0)
    rg = build_running_grid(m, (-3, 3), 0.0, resolution=20)
    z = np.random.default_rng(0).normal(0, 2, 500)
    band = build_band(z, m, rg)
    assert band.t_points.size == rg.points.size + 4
    assert np.all(np.diff(band.t_points) > 0)
    np.testing.assert_allclose(band.t_points[:2], [-9, -6])
    np.testing.assert_allclose(band.t_points[-2:], [6, 9])
    assert np.all(np.diff(band.f_hat) >= 0)
    # every sample counts, not only the in-window ones
    assert band.f_hat[0] == np.mean(z <= -9)


def vacuous_band(t):
    return DistributionBand(np.asarray(t, float), np.full(len(t), 0.5), 1.0, 10)


def test_equal_h_gives_zero():
    m = GaussianNoise(1.0)
    u = np.linspace(-2, 2, 5)
    h = HPair(np.ones(5), np.ones(5))
    assert worst_case_bias(h, vacuous_band([0.0]), m, u, TargetSpec("constant", 1.0)) == 0.0


def test_two_atom_vertex():
    m = GaussianNoise(1.0)
    h = HPair(np.array([1.0, 1.0]), np.array([1.0, 0.5]))
    B = worst_case_bias(h, vacuous_band([0.0]), m, np.array([-1.0, 1.0]), TargetSpec("constant", 1.0),
                        tail_atoms=False)
    assert B == pytest.approx(0.5, abs=1e-9)


def brute_force(obj, hp, C, f_hat, r, rng, draws):
    g = rng.dirichlet(np.full(obj.size, 0.3), size=draws)
    ok = np.all(np.abs(g @ C.T - f_hat) <= r, axis=1)
    vals = (g[ok] @ obj) / (g[ok] @ hp)
    return vals.max() if vals.size else -np.inf


def vertex_max(obj, hp, C, f_hat, r):
    """Enumerate the basic feasible points of the band polytope on the simplex."""
    from itertools import combinations
    m = obj.size
    rows = np.vstack([C, -C, -np.eye(m)])
    rhs = np.concatenate([f_hat + r, -(f_hat - r), np.zeros(m)])
    best = -np.inf
    for idx in combinations(range(rows.shape[0]), m - 1):
        A = np.vstack([np.ones(m), rows[list(idx)]])
        b = np.concatenate([[1.0], rhs[list(idx)]])
        if abs(np.linalg.det(A)) < 1e-12:
            continue
        g = np.linalg.solve(A, b)
        if np.all(rows @ g <= rhs + 1e-9):
            best = max(best, (g @ obj) / (g @ hp))
    return best


@pytest.mark.parametrize("seed", range(5))
def test_lp_matches_brute_force_on_five_atoms(seed):
    rng = np.random.default_rng(seed)
    m = GaussianNoise(1.0)
    u = np.sort(rng.uniform(-2, 2, 5))
    hp = rng.uniform(0.2, 1.5, 5)
    hm = rng.uniform(0.2, 1.5, 5)
    t = np.array([-1.0, 0.0, 1.0])
    truth = rng.dirichlet(np.ones(5))
    f_hat = m.cdf(t[:, None], u[None, :]) @ truth
    band = DistributionBand(t, f_hat, 0.08, 1000)
    B = worst_case_bias(HPair(hp, hm), band, m, u, TargetSpec("constant", 1.0), tail_atoms=False)
    C = m.cdf(t[:, None], u[None, :])
    obj = np.abs(hp - hm)
    sampled = brute_force(obj, hp, C, f_hat, 0.08, rng, 200_000)
    vert = vertex_max(obj, hp, C, f_hat, 0.08)
    assert B >= sampled - 1e-9
    assert abs(B - vert) < 1e-6


def test_infeasible_band_is_an_error():
    m = GaussianNoise(0.1)
    u = np.linspace(-1, 1, 11)
    band = DistributionBand(np.array([5.0]), np.array([0.0]), 0.01, 10_000)  # all mass above 5
    with pytest.raises(BandInfeasibleError):
        worst_case_bias(HPair(np.ones(11), np.zeros(11)), band, m, u, TargetSpec("constant", 1.0),
                        tail_atoms=False)


def random_instance(seed):
    rng = np.random.default_rng(seed)
    m = GaussianNoise(0.8)
    u = np.linspace(-3, 3, 25)
    rg = build_running_grid(m, (-2.4, 2.4), 0.0, resolution=30)
    z = rng.uniform(-3, 3, 800) + 0.8 * rng.standard_normal(800)
    band = build_band(z, m, rg)
    hp = np.exp(-0.5 * (u - 0.5) ** 2) + 0.05
    hm = np.exp(-0.5 * (u + 0.3) ** 2) + 0.05
    return m, u, band, HPair(hp, hm)


@given(seed=st.integers(0, 1000), shrink=st.floats(0.1, 1.0))
def test_monotone_in_radius(seed, shrink):
    m, u, band, h = random_instance(seed)
    tgt = TargetSpec("constant", 1.0)
    wide = worst_case_bias(h, band, m, u, tgt)
    narrow = DistributionBand(band.t_points, band.f_hat, band.radius * shrink, band.n)
    try:
        b_narrow = worst_case_bias(h, narrow, m, u, tgt)
    except BandInfeasibleError:
        assume(False)  # an empty feasible set has no bias to compare
    assert b_narrow <= wide + 1e-7


@given(seed=st.integers(0, 1000), a=st.floats(0.1, 5))
def test_linear_in_M(seed, a):
    m, u, band, h = random_instance(seed)
    b1 = worst_case_bias(h, band, m, u, TargetSpec("constant", 1.0))
    ba = worst_case_bias(h, band, m, u, TargetSpec("constant", a))
    assert ba == pytest.approx(a * b1, rel=1e-6, abs=1e-10)
    assert b1 >= 0


@given(seed=st.integers(0, 200), M=st.floats(0.01, 2), Mp=st.floats(0, 2), dM=st.floats(0, 1))
def test_weighted_monotone_in_M_and_M_prime(seed, M, Mp, dM):
    m, u, band, h = random_instance(seed)
    wbar = np.exp(-0.5 * u ** 2)
    base = worst_case_bias(h, band, m, u, TargetSpec("rd_param", M, Mp, c_prime=0.0), wbar)
    more_M = worst_case_bias(h, band, m, u, TargetSpec("rd_param", M + dM, Mp, c_prime=0.0), wbar)
    more_Mp = worst_case_bias(h, band, m, u, TargetSpec("rd_param", M, Mp + dM, c_prime=0.0), wbar)
    assert more_M >= base - 1e-7 and more_Mp >= base - 1e-7


def test_zero_when_imbalance_vanishes_on_feasible_support():
    m = BinomialNoise(10)
    u = np.array([0.2, 0.5, 0.8])
    # the band pins all mass on the middle atom, where h_+ = h_-
    t = np.arange(0, 11, dtype=float)
    f_hat = m.cdf(t, 0.5)
    band = DistributionBand(t, f_hat, 1e-6, 10 ** 9)
    h = HPair(np.array([1.0, 1.0, 1.0]), np.array([0.2, 1.0, 3.0]))
    B = worst_case_bias(h, band, m, u, TargetSpec("constant", 1.0), tail_atoms=False)
    assert B == pytest.approx(0.0, abs=1e-5)
