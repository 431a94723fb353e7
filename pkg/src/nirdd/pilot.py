"""Pilot ingredients for weight design: NPMLE of the latent law, sigma^2 and M."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grids import LatentGrid, RunningGrid
from .noise import NoiseModel

log = logging.getLogger(__name__)


@dataclass
class PilotDensity:
    atoms: np.ndarray
    g_bar: np.ndarray
    loglik: float
    n_iter: int = 0
    f_bar: np.ndarray | None = None
    loglik_path: list = field(default_factory=list, repr=False)

    def density(self, model: NoiseModel, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return model.density(z[..., None], self.atoms) @ self.g_bar


def npmle_em(samples_z, model: NoiseModel, latent_grid: LatentGrid, max_iter: int = 500,
             tol: float = 1e-8, running_grid: RunningGrid | None = None) -> PilotDensity:
    """Nonparametric MLE of the latent distribution on a fixed grid of atoms, by EM.

    Starts from uniform weights and stops once the mean log-likelihood improves by
    less than ``tol``. Repeated sample values are collapsed, so the result does not
    depend on the order of the samples.
    """
    z = np.asarray(samples_z, dtype=float)
    if z.size < 2:
        raise ValueError("need at least 2 samples")
    if max_iter < 1 or not tol > 0:
        raise ValueError("max_iter >= 1 and tol > 0 required")
    values, counts = np.unique(z, return_counts=True)
    wts = counts / z.size
    atoms = latent_grid.points
    L = model.density(values[:, None], atoms[None, :])
    if np.any(L.max(axis=1) <= 0):
        bad = values[L.max(axis=1) <= 0]
        raise ValueError(f"{bad.size} sample value(s) have zero density under every latent atom "
                         f"(e.g. z={bad[0]:.4g}); widen the latent grid")
    g = np.full(atoms.size, 1.0 / atoms.size)
    f = L @ g
    ll = float(wts @ np.log(f))
    path = [ll]
    it = 0
    if np.isfinite(tol):
        for it in range(1, max_iter + 1):
            g = g * (L.T @ (wts / f))
            g /= g.sum()
            f = L @ g
            new = float(wts @ np.log(f))
            path.append(new)
            gain = new - ll
            ll = new
            if gain < tol:
                break
    f_bar = None
    if running_grid is not None:
        f_bar = model.density(running_grid.points[:, None], atoms[None, :]) @ g
    return PilotDensity(atoms.copy(), g, ll, it, f_bar, path)


def marginal_density_at(pilot: PilotDensity, model: NoiseModel, z) -> float:
    """f(z) = sum_j p(z | u_j) g_j under the pilot."""
    return float(pilot.density(model, z))


def _design(z, w):
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    return np.column_stack([np.ones_like(z), z, w, z * w])


def estimate_sigma2(z, y, w) -> float:
    """Mean squared residual of Y on {1, Z, W, Z*W}."""
    y = np.asarray(y, dtype=float)
    if y.size < 5:
        raise ValueError("need at least 5 observations")
    w = np.asarray(w)
    if w.all() or not w.any():
        raise ValueError("both treatment arms must be nonempty")
    X = _design(z, w)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValueError("design matrix for sigma^2 is rank deficient")
    beta, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ beta
    return float(np.mean(r * r))


def _loo_nw(x, y, h):
    d = (x[:, None] - x[None, :]) / h
    K = np.exp(-0.5 * d * d)
    np.fill_diagonal(K, 0.0)
    s = K.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (K @ y) / s


def _nw(x, y, h, at):
    d = (at[:, None] - x[None, :]) / h
    K = np.exp(-0.5 * d * d)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (K @ y) / K.sum(axis=1)


def estimate_M(z, y, w, window=None, max_cv: int = 2000, n_bandwidths: int = 30) -> float:
    """Half the range of a leave-one-out CV Nadaraya-Watson fit of Y on Z in the control arm.

    Fitted values are taken at the control observations inside ``window`` (all of
    them when ``window`` is None). Falls back to half the raw outcome range when no
    bandwidth gives a finite CV score.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    ctrl = np.asarray(w) == 0
    x, yc = z[ctrl], y[ctrl]
    if x.size < 20:
        raise ValueError("control arm needs at least 20 observations")
    order = np.argsort(x, kind="stable")
    x, yc = x[order], yc[order]
    if x.size > max_cv:
        # evenly spaced order statistics keep this deterministic
        idx = np.linspace(0, x.size - 1, max_cv).round().astype(int)
        xs, ys = x[idx], yc[idx]
    else:
        xs, ys = x, yc
    spread = xs[-1] - xs[0]
    best_h, best_score = None, np.inf
    if spread > 0:
        for h in np.geomspace(spread / 200, spread / 2, n_bandwidths):
            pred = _loo_nw(xs, ys, h)
            score = np.mean((ys - pred) ** 2)
            if np.isfinite(score) and score < best_score:
                best_h, best_score = h, score
    if best_h is None:
        warnings.warn("bandwidth selection failed; using half the raw outcome range for M")
        return float(np.ptp(yc) / 2)
    at = x if window is None else x[(x >= window[0]) & (x <= window[1])]
    if at.size == 0:
        at = x
    fitted = _nw(xs, ys, best_h, at)
    fitted = fitted[np.isfinite(fitted)]
    log.debug("estimate_M: bandwidth %.4g, cv mse %.4g", best_h, best_score)
    return float(np.ptp(fitted) / 2)
