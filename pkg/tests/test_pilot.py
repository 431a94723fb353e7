import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from nirdd.grids import LatentGrid, uniform_latent_grid
from nirdd.noise import BinomialNoise, GaussianNoise
from nirdd.pilot import PilotDensity, estimate_M, estimate_sigma2, marginal_density_at, npmle_em
from nirdd.simulation import SetupSpec, generate


def test_degenerate_binomial_sample_concentrates():
    m = BinomialNoise(20)
    grid = uniform_latent_grid(0.05, 0.95, 19)  # contains 0.5
    pil = npmle_em(np.full(200, 10.0), m, grid, max_iter=500, tol=0.0 + 1e-300)
    near = np.abs(grid.points - 0.5) <= 0.1 + 1e-12
    assert pil.g_bar[near].sum() >= 0.9


def test_single_em_step_matches_hand_formula():
    m = GaussianNoise(1.0)
    atoms = np.array([-1.0, 1.0])
    z = np.array([-0.3, 0.8])
    pil = npmle_em(z, m, LatentGrid(atoms), max_iter=1, tol=1e-300)
    L = stats.norm.pdf(z[:, None] - atoms[None, :])
    f = L @ np.array([0.5, 0.5])
    want = 0.5 * np.mean(L / f[:, None], axis=0)
    np.testing.assert_allclose(pil.g_bar, want, rtol=0, atol=1e-12)
    assert pil.n_iter == 1


def test_infinite_tolerance_returns_uniform_start():
    m = GaussianNoise(0.5)
    grid = uniform_latent_grid(-2, 2, 11)
    pil = npmle_em(np.array([0.1, 0.4, -0.2]), m, grid, tol=math.inf)
    np.testing.assert_array_equal(pil.g_bar, np.full(11, 1 / 11))
    zz = np.linspace(-1, 1, 5)
    np.testing.assert_allclose(pil.density(m, zz), stats.norm.pdf(zz[:, None], grid.points, 0.5).mean(1))


def test_marginal_density_point_mass_and_mixture():
    m = GaussianNoise(1.0)
    pm = PilotDensity(np.array([0.7, 2.0]), np.array([1.0, 0.0]), 0.0)
    assert marginal_density_at(pm, m, 0.2) == pytest.approx(stats.norm.pdf(0.2 - 0.7))
    uni = PilotDensity(np.array([0.7, 2.0]), np.array([0.5, 0.5]), 0.0)
    want = 0.5 * (stats.norm.pdf(0.2 - 0.7) + stats.norm.pdf(0.2 - 2.0))
    assert marginal_density_at(uni, m, 0.2) == pytest.approx(want, abs=1e-15)


def test_pilot_density_near_truth_on_setup1():
    d = generate(SetupSpec(1, 5000, 1.0, seed=3))
    z = d.batch.z
    pil = npmle_em(z, d.model, uniform_latent_grid(z.min(), z.max(), 400))
    truth = (stats.norm.cdf(3) - stats.norm.cdf(-3)) / 6
    assert abs(marginal_density_at(pil, d.model, 0.0) / truth - 1) < 0.10


def test_loglik_path_is_monotone():
    d = generate(SetupSpec(1, 2000, 0.5, seed=1))
    z = d.batch.z
    pil = npmle_em(z, d.model, uniform_latent_grid(z.min(), z.max(), 200), max_iter=300, tol=1e-300)
    assert np.all(np.diff(pil.loglik_path) >= -1e-12)


@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=30), st.randoms())
def test_npmle_permutation_invariant(zs, rnd):
    z = np.array(zs)
    perm = z.copy()
    rnd.shuffle(perm)
    grid = uniform_latent_grid(-4, 4, 41)
    a = npmle_em(z, GaussianNoise(0.6), grid, max_iter=50)
    b = npmle_em(perm, GaussianNoise(0.6), grid, max_iter=50)
    np.testing.assert_array_equal(a.g_bar, b.g_bar)


def test_marginal_density_integrates_to_one():
    d = generate(SetupSpec(1, 1000, 0.25, seed=2))
    z = d.batch.z
    pil = npmle_em(z, d.model, uniform_latent_grid(z.min(), z.max(), 200))
    zz = np.linspace(-10, 10, 8001)
    assert abs(np.trapezoid(pil.density(d.model, zz), zz) - 1) < 1e-3


def test_zero_density_row_rejected():
    with pytest.raises(ValueError, match="zero density"):
        npmle_em(np.array([0.0, 500.0]), GaussianNoise(0.1), uniform_latent_grid(-1, 1, 10))


def test_sigma2_perfect_fit():
    z = np.linspace(-1, 1, 50)
    w = (z >= 0).astype(int)
    y = 1 + 2 * z + 0.5 * w - 0.7 * z * w
    assert estimate_sigma2(z, y, w) < 1e-20


def test_sigma2_additive_noise(rng):
    z = rng.uniform(-2, 2, 10000)
    w = (z >= 0).astype(int)
    y = z + rng.normal(0, 0.5, z.size)
    assert 0.22 <= estimate_sigma2(z, y, w) <= 0.28


def test_sigma2_bernoulli(rng):
    z = rng.uniform(-2, 2, 10000)
    w = (z >= 0).astype(int)
    y = (rng.uniform(size=z.size) < 0.5).astype(float)
    assert abs(estimate_sigma2(z, y, w) - 0.25) < 0.02


def test_sigma2_needs_both_arms():
    z = np.linspace(0.1, 1, 20)
    with pytest.raises(ValueError):
        estimate_sigma2(z, z, np.ones(20, int))


def test_M_heuristic_constant_outcome(rng):
    z = rng.uniform(-2, 2, 2000)
    assert estimate_M(z, np.full(z.size, 0.4), (z >= 0).astype(int)) < 0.01


def test_M_heuristic_recovers_half_range(rng):
    u = rng.uniform(-3, 3, 5000)
    y = (rng.uniform(size=u.size) < 0.3 + 0.25 * np.sin(u)).astype(float)
    assert 0.2 <= estimate_M(u, y, np.zeros(u.size, int)) <= 0.3
