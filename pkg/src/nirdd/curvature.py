"""Noise-implied bounds on the slope and curvature of E[Y(w) | Z = z] under Gaussian error.

Everything is computed for standard-normal noise with density floor nu * rho and
rescaled by 1/nu (first derivative) or 1/nu^2 (second derivative).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

PHI0 = 1 / math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class CurvatureQuery:
    M: float
    nu: float
    rho: float

    def __post_init__(self):
        if not (self.M > 0 and math.isfinite(self.M)):
            raise ValueError("M must be positive")
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise ValueError("nu must be positive")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.rho * self.nu > PHI0 * (1 + 1e-12):
            raise ValueError(f"rho={self.rho} exceeds the largest possible mixture density "
                             f"1/(sqrt(2 pi) nu) = {PHI0 / self.nu:.6g}")

    @property
    def r(self) -> float:
        """Density floor on the standard-normal scale."""
        return min(self.rho * self.nu, PHI0)


def _neglog(x):
    return max(0.0, -math.log(x))


def derivative_bounds_closed_form(q: CurvatureQuery) -> dict:
    L0 = _neglog(2 * math.pi * q.r ** 2)
    L25 = _neglog(2 * math.pi * q.r ** 2 / 25)
    return {
        "d1_lo": q.M / q.nu * math.sqrt(L0),
        "d1_hi": 5 * q.M / q.nu * math.sqrt(L25),
        "d2_lo": q.M / (5 * q.nu ** 2) * L0,
        "d2_hi": 13 * q.M / q.nu ** 2 * L25,
    }


def _d1_shift(s, r):
    """First-derivative bound (per unit M, standard scale) with outcome shift c = s*M."""
    return (2 + s) * (math.sqrt(_neglog(2 * math.pi * r * r))
                      + math.sqrt(_neglog(2 * math.pi * r * r * s * s / (2 + s) ** 2)))


def _d2_shift(s, r):
    """The |mu| * |h''/h - f''/f| term of the second-derivative bound, per unit M.

    Both h''/h + 1 and f''/f + 1 lie in [0, -log(2 pi dens^2)], so their difference
    is bounded by the larger range, which belongs to h because h >= f * s/(2+s).
    """
    return (2 + s) * _neglog(2 * math.pi * r * r * s * s / (2 + s) ** 2)


def _minimize_log_grid(fn, n_grid=200, lo=1e-3, hi=1e3):
    xs = np.linspace(math.log(lo), math.log(hi), n_grid)
    vals = np.array([fn(math.exp(x)) for x in xs])
    i = int(np.argmin(vals))
    best_x, best = xs[i], vals[i]
    if 0 < i < n_grid - 1:
        res = optimize.minimize_scalar(lambda x: fn(math.exp(x)), bracket=(xs[i - 1], xs[i], xs[i + 1]),
                                       method="golden", options={"xtol": 1e-12})
        if res.fun < best:
            best_x, best = res.x, res.fun
    return float(best), math.exp(best_x)


def sharpened_upper_bounds(q: CurvatureQuery, n_grid: int = 200) -> dict:
    """Upper bounds with the outcome shift optimized rather than fixed at M/2."""
    r = q.r
    d1, s1 = _minimize_log_grid(lambda s: _d1_shift(s, r), n_grid)
    t2, s2 = _minimize_log_grid(lambda s: _d2_shift(s, r), n_grid)
    d2 = t2 + 2 * d1 * math.sqrt(_neglog(2 * math.pi * r * r))
    return {
        "d1_hi_sharp": q.M * d1 / q.nu,
        "d2_hi_sharp": q.M * d2 / q.nu ** 2,
        "shift_d1": s1 * q.M,
        "shift_d2": s2 * q.M,
    }


def three_point_curvature(c, w):
    """(|mu''(0)|, f(0)) per unit M for G = (1-w)/2 (delta_-c + delta_c) + w delta_0, nu = 1."""
    c = np.asarray(c, dtype=float)
    w = np.asarray(w, dtype=float)
    phic = PHI0 * np.exp(-0.5 * c * c)
    f0 = (1 - w) * phic + w * PHI0
    f2 = (1 - w) * (c * c - 1) * phic - w * PHI0
    mu2 = -2 * w * (PHI0 * f0 + PHI0 * f2) / f0 ** 2
    return np.abs(mu2), f0


def sharpened_lower_bound_d2(q: CurvatureQuery, n_grid: int = 200, return_argmax: bool = False):
    """Best curvature attained by three-point latent laws with f(0) >= rho.

    Searches c in (0, 6 nu] and w in (0, 1) on an n_grid x n_grid grid, plus the
    analytic witness w = phi(c), phi(c) = rho.
    """
    r = q.r
    cs = np.linspace(6 / n_grid, 6, n_grid)
    ws = np.linspace(0, 1, n_grid + 2)[1:-1]
    C, W = np.meshgrid(cs, ws, indexing="ij")
    C, W = C.ravel(), W.ravel()
    c_star = math.sqrt(_neglog(2 * math.pi * r * r))
    C = np.append(C, c_star)
    W = np.append(W, PHI0 * math.exp(-0.5 * c_star ** 2))
    val, f0 = three_point_curvature(C, W)
    val = np.where(f0 >= r * (1 - 1e-12), val, -np.inf)
    i = int(np.argmax(val))
    out = q.M * float(val[i]) / q.nu ** 2
    if return_argmax:
        return out, (float(C[i]) * q.nu, float(W[i]))
    return out


def all_bounds(q: CurvatureQuery) -> dict:
    out = derivative_bounds_closed_form(q)
    out.update(sharpened_upper_bounds(q))
    out["d2_lo_sharp"] = sharpened_lower_bound_d2(q)
    out.update({"M": q.M, "nu": q.nu, "rho": q.rho})
    return out
