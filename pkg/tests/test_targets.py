import numpy as np
import pytest
from hypothesis import given, strategies as st

from nirdd.grids import uniform_latent_grid
from nirdd.noise import BinomialNoise, GaussianNoise
from nirdd.pilot import PilotDensity, npmle_em
from nirdd.targets import TargetSpec, make_wbar


def point_mass(u):
    return PilotDensity(np.array([u]), np.array([1.0]), 0.0)


def test_target_validation():
    with pytest.raises(ValueError):
        TargetSpec("bogus")
    with pytest.raises(ValueError):
        TargetSpec("rd_param", M=1.0, M_prime=1.0)  # c_prime missing
    with pytest.raises(ValueError):
        TargetSpec("constant", M=-1)
    t = TargetSpec("rd_param", M=0.5, M_prime=0.25, c_prime=0.3)
    assert TargetSpec.from_dict(t.to_dict()) == t
    assert t.weighted and not TargetSpec("constant").weighted


def test_rd_param_point_mass_self_normalizes():
    m = GaussianNoise(0.4)
    spec = TargetSpec("rd_param", 1.0, 1.0, c_prime=0.0)
    wb = make_wbar(spec, m, np.array([0.3]), point_mass(0.3), cutoff=0.0)
    assert wb.values[0] == pytest.approx(1.0, abs=1e-14)


def test_cutoff_change_single_binomial_step():
    m = BinomialNoise(20)
    u = np.linspace(0.1, 0.9, 9)
    z = np.array([11.0, 11.0, 12.0, 13.0])  # a quarter of the sample sits at z = 11
    spec = TargetSpec("cutoff_change", 1.0, 1.0, c_prime=11.0)
    wb = make_wbar(spec, m, u, point_mass(0.5), cutoff=12.0, samples_z=z)
    np.testing.assert_allclose(wb.values, m.density(11.0, u) / 0.5, atol=1e-14)


def test_noise_change_symmetric_law_has_no_net_effect():
    spec = TargetSpec("noise_change", 1.0, 1.0, nu_prime=0.8)
    pil = PilotDensity(np.array([-0.5, 0.5]), np.array([0.5, 0.5]), 0.0)
    with pytest.raises(ValueError, match="vanishes"):
        make_wbar(spec, GaussianNoise(0.5), np.linspace(-2, 2, 9), pil, cutoff=0.0)


def test_noise_change_null_policy():
    spec = TargetSpec("noise_change", 1.0, 1.0, nu_prime=0.5)
    with pytest.raises(ValueError, match="null policy"):
        make_wbar(spec, GaussianNoise(0.5), np.linspace(-2, 2, 9), point_mass(0.0), cutoff=0.0)


def test_noise_change_flags_mixed_sign():
    # the policy shifts assignment in opposite directions on the two sides of c
    spec = TargetSpec("noise_change", 1.0, 1.0, nu_prime=1.0)
    pil = PilotDensity(np.array([-0.5, 0.3]), np.array([0.5, 0.5]), 0.0)
    wb = make_wbar(spec, GaussianNoise(0.5), np.linspace(-2, 2, 9), pil, cutoff=0.0)
    assert wb.mixed_sign


@given(cp=st.floats(-1.5, 1.5))
def test_rd_param_weights_positive(cp):
    m = GaussianNoise(0.5)
    u = np.linspace(-2, 2, 81)
    pil = PilotDensity(u, np.full(u.size, 1 / u.size), 0.0)
    wb = make_wbar(TargetSpec("rd_param", 1, 1, c_prime=cp), m, u, pil, cutoff=0.0)
    assert np.all(wb.values > 0)


def test_cutoff_change_nonnegative_and_decaying(rng):
    m = GaussianNoise(0.3)
    u = np.linspace(-4, 4, 161)
    z = rng.normal(0, 1, 2000)
    wb = make_wbar(TargetSpec("cutoff_change", 1, 1, c_prime=-0.3), m, u, point_mass(0.0), 0.0, z)
    assert np.all(wb.values >= 0)
    # largest kernel value over the window [c', c] for each u
    kernel = np.maximum(m.density(-0.3, u), m.density(0.0, u))
    kernel = np.where((u > -0.3) & (u < 0), m.density(u, u), kernel)
    ratio = wb.values / kernel
    # the tail ratio decays (Mills-ratio rate) relative to the centre of the window
    assert ratio[0] < 0.5 * ratio[76] and ratio[-1] < 0.5 * ratio[76]
    assert np.all(np.diff(ratio[:60]) >= -1e-12) and np.all(np.diff(ratio[100:]) <= 1e-12)


@pytest.mark.parametrize("spec", [
    TargetSpec("rd_param", 1, 1, c_prime=0.2),
    TargetSpec("cutoff_change", 1, 1, c_prime=-0.4),
    TargetSpec("noise_change", 1, 1, nu_prime=0.8),
])
def test_wbar_normalized_under_true_pilot(spec, rng):
    m = GaussianNoise(0.5)
    # asymmetric about the cutoff, so the noise-change policy moves some net mass
    u = rng.uniform(-1, 2, 20000)
    z = u + 0.5 * rng.standard_normal(u.size)
    grid = uniform_latent_grid(-1, 2, 201)
    g = np.full(grid.count, 1 / grid.count)
    pil = PilotDensity(grid.points, g, 0.0)
    wb = make_wbar(spec, m, grid.points, pil, 0.0, z)
    assert abs(wb.values @ g - 1) < 0.1


def test_rd_param_outside_support_errors():
    pil = point_mass(0.0)
    with pytest.raises(ValueError, match="outside"):
        make_wbar(TargetSpec("rd_param", 1, 1, c_prime=50.0), GaussianNoise(0.1), np.zeros(3), pil, 0.0)
