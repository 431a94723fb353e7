"""Worst-case bias over a DKW band of latent distributions, via Charnes-Cooper LPs."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .grids import RunningGrid
from .noise import NoiseModel
from .targets import TargetSpec
from .weights import HPair


class BandInfeasibleError(RuntimeError):
    pass


class UnboundedBiasError(RuntimeError):
    pass


def dkw_radius(n: int) -> float:
    alpha_n = min(0.05, n ** -0.25)
    return math.sqrt(math.log(2 / alpha_n) / (2 * n))


@dataclass
class DistributionBand:
    t_points: np.ndarray
    f_hat: np.ndarray
    radius: float
    n: int


def empirical_cdf(samples, t) -> np.ndarray:
    s = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(s, np.asarray(t, dtype=float), side="right") / s.size


def build_band(samples_z, model: NoiseModel, grid: RunningGrid) -> DistributionBand:
    """DKW band evaluated at the running-grid points plus two tail points per side.

    The tail points sit half a window width and a full window width beyond each
    edge, so the band also constrains where mass outside the window may sit.
    """
    z = np.asarray(samples_z, dtype=float)
    n = z.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    lo, hi = grid.window
    width = hi - lo
    offs = np.array([0.5, 1.0]) * width
    if model.discrete:
        offs = np.maximum(np.round(offs), [1, 2])
    t = np.concatenate([lo - offs[::-1], grid.points, hi + offs])
    t = np.unique(t)
    return DistributionBand(t, empirical_cdf(z, t), dkw_radius(n), n)


def _band_lp(obj, h_plus, C, band):
    """max obj.g / h_plus.g over probability vectors g with |C g - F_hat| <= r.

    Charnes-Cooper: y = s g with h_plus.y = 1, sum(y) = s, and the band rows scaled by s.
    """
    m = obj.size
    c = -np.concatenate([obj, [0.0]])
    A_eq = np.vstack([np.concatenate([h_plus, [0.0]]), np.concatenate([np.ones(m), [-1.0]])])
    b_eq = np.array([1.0, 0.0])
    r = band.radius
    A_ub = np.vstack([np.hstack([C, -(band.f_hat + r)[:, None]]),
                      np.hstack([-C, (band.f_hat - r)[:, None]])])
    b_ub = np.zeros(A_ub.shape[0])
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs", options={"primal_feasibility_tolerance": 1e-9,
                                           "dual_feasibility_tolerance": 1e-9})
    if res.status == 2:
        raise BandInfeasibleError("no latent distribution on the grid is consistent with the DKW band; "
                                  "widen the latent grid")
    if res.status == 3:
        raise UnboundedBiasError("bias LP unbounded: some band-feasible distribution puts no mass "
                                 "where h_+ is positive")
    if res.status != 0:
        raise RuntimeError(f"bias LP failed: {res.message}")
    y = res.x[:-1]
    s = res.x[-1]
    return float(-res.fun), (y / s if s > 0 else y)


def worst_case_bias(h: HPair, band: DistributionBand, model: NoiseModel, latent_points,
                    target: TargetSpec, wbar=None, tail_atoms: bool = True,
                    return_solution: bool = False):
    """Largest normalized bias bound over latent laws on the grid consistent with the band.

    With ``tail_atoms`` two extra atoms at -inf and +inf (h = 0, CDF 1 and 0) absorb
    mass that lies far outside the latent grid.
    """
    u = np.asarray(getattr(latent_points, "points", latent_points), dtype=float)
    hp, hm = np.asarray(h.h_plus, float), np.asarray(h.h_minus, float)
    if not (np.all(np.isfinite(hp)) and np.all(np.isfinite(hm))):
        raise ValueError("h must be finite")
    C = model.cdf(band.t_points[:, None], u[None, :])
    base = target.M * np.abs(hp - hm)
    terms = []
    if target.weighted:
        if wbar is None:
            raise ValueError("weighted target requires wbar")
        d = hp - np.asarray(wbar, dtype=float)
        mp = target.M_prime
        terms = [base + mp * np.abs(d) + mp * d, base + mp * np.abs(d) - mp * d]
    else:
        terms = [base]
    if tail_atoms:
        C = np.hstack([C, np.ones((C.shape[0], 1)), np.zeros((C.shape[0], 1))])
        hp = np.concatenate([hp, [0.0, 0.0]])
        terms = [np.concatenate([t, [0.0, 0.0]]) for t in terms]
    best, best_g = -math.inf, None
    for obj in terms:
        if not np.any(obj > 0):
            val, g = 0.0, None
            # still check the band is feasible
            _band_lp(np.zeros_like(obj), hp, C, band)
        else:
            val, g = _band_lp(obj, hp, C, band)
        if val > best:
            best, best_g = val, g
    best = max(best, 0.0)
    if return_solution:
        return best, best_g
    return best
