"""Balancing weights: the induced h-functions and the quadratic program that designs them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import clarabel
import numpy as np
from scipy import sparse

from .grids import LatentGrid, RunningGrid, kernel_matrix
from .noise import NoiseModel
from .targets import TargetSpec


class SolverError(RuntimeError):
    pass


@dataclass
class WeightFunction:
    """Weights on a running grid: gamma_- below the cutoff, gamma_+ at or above it."""

    gamma: np.ndarray
    grid: RunningGrid
    discrete: bool
    diagnostics: dict = field(default_factory=dict)

    @property
    def window(self) -> tuple[float, float]:
        return self.grid.window

    @property
    def cutoff(self) -> float:
        return self.grid.cutoff

    def evaluate(self, z) -> np.ndarray:
        """gamma at arbitrary z: exact lookup (binomial) or per-side linear interpolation.

        Zero outside the window. Interpolation never crosses the cutoff; between the
        last control grid point and the cutoff the edge value is held.
        """
        z = np.asarray(z, dtype=float)
        pts, g = self.grid.points, self.gamma
        lo, hi = self.window
        inside = (z >= lo) & (z <= hi)
        if self.discrete:
            idx = np.clip(np.searchsorted(pts, np.round(z)), 0, len(pts) - 1)
            hit = inside & (pts[idx] == np.round(z))
            return np.where(hit, g[idx], 0.0)
        out = np.zeros_like(z)
        above = self.grid.above
        zb = z < self.cutoff
        out[zb] = np.interp(z[zb], pts[~above], g[~above])
        out[~zb] = np.interp(z[~zb], pts[above], g[above])
        return np.where(inside, out, 0.0)

    def side_masses(self, f_bar) -> tuple[float, float]:
        """(sum_{z<c} gamma f lambda, sum_{z>=c} gamma f lambda) for a density on the grid."""
        m = self.gamma * np.asarray(f_bar) * self.grid.lambda_weights
        above = self.grid.above
        return float(m[~above].sum()), float(m[above].sum())


@dataclass
class HPair:
    h_plus: np.ndarray
    h_minus: np.ndarray


def compute_h(weights: WeightFunction, model: NoiseModel, latent_points) -> HPair:
    """h_+(u) = sum_{z_k >= c} gamma_k p(z_k|u) lambda_k, and h_- likewise below c."""
    u = getattr(latent_points, "points", latent_points)
    K = kernel_matrix(model, u, weights.grid)
    above = weights.grid.above
    return HPair(K[:, above] @ weights.gamma[above], K[:, ~above] @ weights.gamma[~above])


@dataclass
class QPOptions:
    C: float = math.inf
    beta: float = 1.0
    tol_feas: float = 1e-8
    tol_gap_abs: float = 1e-8
    tol_gap_rel: float = 1e-7
    verify_tol: float = 1e-7
    max_iter: int = 200


def solve_weights(model: NoiseModel, running_grid: RunningGrid, latent_grid: LatentGrid,
                  f_bar, sigma2: float, n: int, target: TargetSpec, wbar=None,
                  options: QPOptions | None = None) -> WeightFunction:
    """Minimize (sigma2/n) sum gamma^2 f lambda + t^2 under worst-case imbalance constraints.

    Constant target: M |h_- - h_+| <= t on every latent grid point.
    Weighted target: t = t1 + t2 with M |h_- - h_+| <= t1 and M' |h_+ - wbar| <= t2.
    Both sides are normalized to integrate to one against f_bar, gamma vanishes off
    the grid window, and |gamma| <= C n^beta when C is finite.
    """
    opts = options or QPOptions()
    if n < 2:
        raise ValueError("n must be at least 2")
    f_bar = np.asarray(f_bar, dtype=float)
    lam = running_grid.lambda_weights
    above = running_grid.above
    K = kernel_matrix(model, latent_grid.points, running_grid)
    D = np.where(above[None, :], -K, K)  # D @ gamma = h_- - h_+
    nz, nu_ = len(running_grid), len(latent_grid)
    M = target.M
    weighted = target.weighted
    n_t = 2 if weighted else 1
    nx = nz + n_t

    # Work with t = k * tau, k = sqrt(sigma2 / n), and divide the objective by k^2 so that
    # both quadratic blocks are O(1) even when sigma2 / n is tiny.
    k = math.sqrt(sigma2 / n)
    if not k > 0:
        raise ValueError("sigma2 / n must be positive")
    quad = np.concatenate([2 * f_bar * lam, np.zeros(n_t)])
    P = sparse.diags(quad, format="lil")
    if weighted:
        P[nz, nz] = P[nz + 1, nz + 1] = P[nz, nz + 1] = 2.0
    else:
        P[nz, nz] = 2.0
    P = sparse.triu(P.tocsc(), format="csc")
    q = np.zeros(nx)

    eq = np.zeros((2, nx))
    eq[0, :nz] = np.where(~above, f_bar * lam, 0.0)
    eq[1, :nz] = np.where(above, f_bar * lam, 0.0)
    eq_b = np.ones(2)

    tcol = np.zeros((nu_, n_t))
    tcol[:, 0] = -k
    rows = [np.hstack([M * D, tcol]), np.hstack([-M * D, tcol])]
    rhs = [np.zeros(nu_), np.zeros(nu_)]
    if weighted:
        if wbar is None:
            raise ValueError("weighted target requires wbar")
        wbar = np.asarray(wbar, dtype=float)
        Kp = np.where(above[None, :], K, 0.0)
        t2 = np.zeros((nu_, n_t))
        t2[:, 1] = -k
        Mp = target.M_prime
        rows += [np.hstack([Mp * Kp, t2]), np.hstack([-Mp * Kp, t2])]
        rhs += [Mp * wbar, -Mp * wbar]
    box = opts.C * n ** opts.beta
    if math.isfinite(box):
        I = np.hstack([np.eye(nz), np.zeros((nz, n_t))])
        rows += [I, -I]
        rhs += [np.full(nz, box), np.full(nz, box)]
    G = np.vstack(rows)
    h = np.concatenate(rhs)

    A = sparse.csc_matrix(np.vstack([eq, G]))
    b = np.concatenate([eq_b, h])
    cones = [clarabel.ZeroConeT(2), clarabel.NonnegativeConeT(G.shape[0])]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = opts.tol_feas
    settings.tol_gap_abs = opts.tol_gap_abs
    settings.tol_gap_rel = opts.tol_gap_rel
    settings.max_iter = opts.max_iter
    sol = clarabel.DefaultSolver(P, q, A, b, cones, settings).solve()
    status = str(sol.status)
    if "Infeasible" in status:
        raise SolverError(f"weight QP infeasible ({status})")
    if status != "Solved":
        raise SolverError(f"weight QP not solved: {status}")
    x = np.asarray(sol.x)
    gamma = x[:nz]

    eq_res = float(np.max(np.abs(eq @ x - eq_b)))
    ineq_viol = float(max(0.0, np.max(G @ x - h)))
    if eq_res > opts.verify_tol or ineq_viol > opts.verify_tol:
        raise SolverError(f"weight QP solution violates constraints (eq {eq_res:.2e}, ineq {ineq_viol:.2e})")

    imbalance = M * np.abs(D @ gamma)
    diag = {
        "objective": float(sol.obj_val) * k * k,
        "variance_term": float(sigma2 / n * np.sum(gamma ** 2 * f_bar * lam)),
        "max_abs_gamma": float(np.max(np.abs(gamma))),
        "status": status,
        "iterations": int(sol.iterations),
        "equality_residual": eq_res,
        "inequality_violation": ineq_viol,
        "sigma2": float(sigma2),
        "n": int(n),
    }
    if weighted:
        t1 = float(imbalance.max())
        t2v = float(np.max(target.M_prime * np.abs(Kp @ gamma - wbar)))
        diag.update(t=t1 + t2v, t1=t1, t2=t2v, t_solver=float(k * (x[nz] + x[nz + 1])))
    else:
        diag.update(t=float(imbalance.max()), t1=float(imbalance.max()), t2=0.0, t_solver=float(k * x[nz]))
    return WeightFunction(gamma, running_grid, model.discrete, diag)


def check_regularity(weights: WeightFunction, samples_z, delta: float = 0.05,
                     C: float = math.inf, beta: float = 1.0) -> dict:
    """Diagnostics for the regular-kernel condition on the realized sample."""
    z = np.asarray(samples_z, dtype=float)
    n = z.size
    g = weights.evaluate(z)
    above_s = z >= weights.cutoff
    above_g = weights.grid.above
    out = {"n": n, "delta": delta, "beta": beta}
    ok = True
    for name, s_mask, g_mask in (("plus", above_s, above_g), ("minus", ~above_s, ~above_g)):
        max_abs = float(np.max(np.abs(weights.gamma[g_mask])))
        mean = float(np.sum(g[s_mask]) / n) if n else 0.0
        ratio = max_abs / (n ** beta * mean) if mean > 0 else math.inf
        out[f"max_abs_gamma_{name}"] = max_abs
        out[f"mean_gamma_{name}"] = mean
        out[f"ratio_{name}"] = ratio
        ok &= mean >= delta
        if math.isfinite(C):
            ok &= ratio <= C
    out["passed"] = bool(ok)
    return out
