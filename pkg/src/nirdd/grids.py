"""Discretizations of the latent space and the running-variable space."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import NoiseModel

BINOMIAL_EPS = 1e-4


@dataclass(frozen=True)
class RunningGrid:
    points: np.ndarray
    lambda_weights: np.ndarray
    cutoff: float
    cutoff_index: int
    bounds: tuple | None = None  # window edges; defaults to the outermost points

    @property
    def above(self) -> np.ndarray:
        return self.points >= self.cutoff

    @property
    def below(self) -> np.ndarray:
        return ~self.above

    @property
    def window(self) -> tuple[float, float]:
        if self.bounds is not None:
            return (float(self.bounds[0]), float(self.bounds[1]))
        return (float(self.points[0]), float(self.points[-1]))

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class LatentGrid:
    points: np.ndarray

    @property
    def count(self) -> int:
        return len(self.points)

    def __len__(self):
        return len(self.points)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    dx = np.diff(x)
    w = np.zeros_like(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def build_running_grid(model: NoiseModel, window, cutoff: float, resolution: int = 400,
                       scheme: str = "midpoint") -> RunningGrid:
    """Grid over the weight window carrying quadrature weights for lambda.

    The default ``scheme="midpoint"`` uses the centres of equal cells that partition
    [lo, cutoff) and [cutoff, hi]. Each side then has its own second-order rule, and
    the grid is mirror-symmetric about the cutoff when the window is.
    ``scheme="trapezoid"`` uses ``resolution`` equispaced points with the cutoff
    inserted; the shared cutoff node makes one-sided integrals first-order accurate.
    Binomial noise uses every integer in the window.
    """
    lo, hi = float(window[0]), float(window[1])
    if not lo < hi:
        raise ValueError(f"empty window [{lo}, {hi}]")
    if model.discrete:
        pts = np.arange(math.ceil(lo), math.floor(hi) + 1, dtype=float)
        lam = np.ones_like(pts)
    else:
        if resolution < 4:
            raise ValueError("resolution must be at least 4")
        if not lo < cutoff < hi:
            raise ValueError(f"window [{lo}, {hi}] lies on one side of the cutoff {cutoff}")
        if scheme == "trapezoid":
            pts = np.linspace(lo, hi, resolution)
            if not np.any(np.isclose(pts, cutoff, rtol=0, atol=1e-12 * (hi - lo))):
                pts = np.sort(np.append(pts, cutoff))
            else:
                pts[np.argmin(np.abs(pts - cutoff))] = cutoff
            lam = _trapezoid_weights(pts)
        elif scheme == "midpoint":
            n_lo = max(1, round(resolution * (cutoff - lo) / (hi - lo)))
            n_hi = max(1, resolution - n_lo)
            e_lo = np.linspace(lo, cutoff, n_lo + 1)
            e_hi = np.linspace(cutoff, hi, n_hi + 1)
            pts = np.concatenate([(e_lo[:-1] + e_lo[1:]) / 2, (e_hi[:-1] + e_hi[1:]) / 2])
            lam = np.concatenate([np.diff(e_lo), np.diff(e_hi)])
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    above = pts >= cutoff
    if above.all() or not above.any():
        raise ValueError(f"window [{lo}, {hi}] lies on one side of the cutoff {cutoff}")
    return RunningGrid(pts, lam, float(cutoff), int(np.argmax(above)), (lo, hi))


def latent_span(model: NoiseModel, cutoff: float, span: float = 4.0) -> tuple[float, float]:
    """Latent interval of ``span`` noise sds around the cutoff (binomial: fraction scale)."""
    if model.discrete:
        half = span * model.scale
        k = model.trials
        return (max(BINOMIAL_EPS, (cutoff - half) / k), min(1 - BINOMIAL_EPS, (cutoff + half) / k))
    return (cutoff - span * model.nu, cutoff + span * model.nu)


def build_latent_grid(model: NoiseModel, cutoff: float, resolution: int = 400,
                      span: float = 4.0) -> LatentGrid:
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    lo, hi = latent_span(model, cutoff, span)
    return LatentGrid(np.linspace(lo, hi, resolution))


def uniform_latent_grid(lo: float, hi: float, resolution: int = 400) -> LatentGrid:
    if not lo < hi:
        raise ValueError("empty latent interval")
    return LatentGrid(np.linspace(lo, hi, resolution))


def kernel_matrix(model: NoiseModel, latent_points, grid: RunningGrid) -> np.ndarray:
    """K[j, k] = p(z_k | u_j) * lambda_k."""
    u = np.asarray(latent_points, dtype=float)[:, None]
    return model.density(grid.points[None, :], u) * grid.lambda_weights[None, :]
