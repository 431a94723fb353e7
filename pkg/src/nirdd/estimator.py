"""Self-normalized ratio estimator and its plug-in variance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .weights import WeightFunction


@dataclass
class SampleBatch:
    z: np.ndarray
    y: np.ndarray
    w: np.ndarray
    cutoff: float

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.w is None:
            self.w = (self.z >= self.cutoff).astype(int)
        self.w = np.asarray(self.w).astype(int)
        if not (self.z.shape == self.y.shape == self.w.shape) or self.z.ndim != 1:
            raise ValueError("z, y and w must be 1-d arrays of equal length")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("running variable contains non-finite values")
        bad = self.w != (self.z >= self.cutoff)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValueError(f"treatment indicator disagrees with 1{{z >= c}} for {bad.sum()} row(s), "
                             f"first at index {i} (z={self.z[i]}, w={self.w[i]}); assignment must be "
                             "a deterministic function of the running variable")

    @property
    def n(self) -> int:
        return self.z.size


@dataclass
class RatioEstimate:
    tau_hat: float
    mu_plus: float
    mu_minus: float
    n_eff_plus: float
    n_eff_minus: float


def _sides(batch: SampleBatch, weights: WeightFunction):
    if not np.all(np.isfinite(batch.y)):
        raise ValueError("outcomes contain non-finite values")
    g = weights.evaluate(batch.z)
    above = batch.z >= batch.cutoff
    return g, above


def _weighted_mean(g, y, side):
    s = g.sum()
    if s == 0:
        raise ValueError(f"empty side: weights on the {side} side sum to zero")
    return float(g @ y / s)


def ratio_estimate(batch: SampleBatch, weights: WeightFunction) -> RatioEstimate:
    g, above = _sides(batch, weights)
    gp, gm = g[above], g[~above]
    mu_p = _weighted_mean(gp, batch.y[above], "treated")
    mu_m = _weighted_mean(gm, batch.y[~above], "control")
    # Kish effective sample sizes; out-of-window units carry zero weight
    n_eff_p = float(gp.sum() ** 2 / np.sum(gp ** 2))
    n_eff_m = float(gm.sum() ** 2 / np.sum(gm ** 2))
    return RatioEstimate(mu_p - mu_m, mu_p, mu_m, n_eff_p, n_eff_m)


def plugin_variance(batch: SampleBatch, weights: WeightFunction, mu_plus: float,
                    mu_minus: float) -> float:
    """Plug-in estimate of the asymptotic variance of sqrt(n) * tau_hat."""
    g, above = _sides(batch, weights)
    n = batch.n
    V = 0.0
    for side, mu, name in ((above, mu_plus, "treated"), (~above, mu_minus, "control")):
        gs, ys = g[side], batch.y[side]
        denom = gs.sum() / n
        if denom == 0:
            raise ValueError(f"empty side: weights on the {name} side sum to zero")
        V += (np.sum(gs ** 2 * (ys - mu) ** 2) / n) / denom ** 2
    return float(V)
