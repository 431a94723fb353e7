"""Measurement-error laws for the running variable given the latent variable."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

_TINY = 1e-300


@dataclass(frozen=True)
class GaussianNoise:
    """Z | U = u ~ N(u, nu^2); reference measure is Lebesgue."""

    nu: float

    def __post_init__(self):
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"nu must be positive and finite, got {self.nu}")

    discrete = False

    @property
    def scale(self) -> float:
        """Noise standard deviation in units of Z (used to size windows and grids)."""
        return self.nu

    def check_latent(self, u):
        u = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(u)):
            raise ValueError("latent values must be finite")
        return u

    def density(self, z, u):
        u = self.check_latent(u)
        z = np.asarray(z, dtype=float)
        out = np.exp(-0.5 * ((z - u) / self.nu) ** 2) / (math.sqrt(2 * math.pi) * self.nu)
        return np.where(out < _TINY, 0.0, out)

    def cdf(self, t, u):
        u = self.check_latent(u)
        return stats.norm.cdf((np.asarray(t, dtype=float) - u) / self.nu)

    def prob_below(self, t, u):
        """P(Z < t | u)."""
        return self.cdf(t, u)

    def prob_between(self, a, b, u):
        """P(a <= Z < b | u), accurate in both tails."""
        u = self.check_latent(u)
        lo = (np.asarray(a, dtype=float) - u) / self.nu
        hi = (np.asarray(b, dtype=float) - u) / self.nu
        return np.where(lo > 0, stats.norm.sf(lo) - stats.norm.sf(hi),
                        stats.norm.cdf(hi) - stats.norm.cdf(lo))

    def default_window(self, cutoff: float) -> tuple[float, float]:
        return (cutoff - 3 * self.nu, cutoff + 3 * self.nu)

    def to_dict(self) -> dict:
        return {"type": "gaussian", "nu": self.nu}


@dataclass(frozen=True)
class BinomialNoise:
    """Z | U = u ~ Binomial(trials, u) on the count scale, latent u in (0, 1)."""

    trials: int

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValueError(f"trials must be a positive integer, got {self.trials}")

    discrete = True

    @property
    def scale(self) -> float:
        # sd of Z at u = 1/2
        return 0.5 * math.sqrt(self.trials)

    def check_latent(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(~(u > 0) | ~(u < 1)):
            raise ValueError("binomial latent values must lie in the open interval (0, 1)")
        return u

    def density(self, z, u):
        u = self.check_latent(u)
        z = np.asarray(z, dtype=float)
        integral = (z == np.round(z)) & (z >= 0) & (z <= self.trials)
        pmf = stats.binom.pmf(np.where(integral, np.round(z), 0), self.trials, u)
        return np.where(integral, pmf, 0.0)

    def cdf(self, t, u):
        u = self.check_latent(u)
        return stats.binom.cdf(np.floor(np.asarray(t, dtype=float)), self.trials, u)

    def prob_below(self, t, u):
        """P(Z < t | u)."""
        return self.cdf(np.ceil(np.asarray(t, dtype=float)) - 1, u)

    def prob_between(self, a, b, u):
        """P(a <= Z < b | u), accurate in both tails."""
        u = self.check_latent(u)
        ka = np.ceil(np.asarray(a, dtype=float)) - 1
        kb = np.ceil(np.asarray(b, dtype=float)) - 1
        upper = stats.binom.sf(ka, self.trials, u) - stats.binom.sf(kb, self.trials, u)
        lower = stats.binom.cdf(kb, self.trials, u) - stats.binom.cdf(ka, self.trials, u)
        return np.where(ka >= self.trials * u, upper, lower)

    def default_window(self, cutoff: float) -> tuple[float, float]:
        half = 1.5 * math.sqrt(self.trials)
        return (max(0.0, cutoff - half), min(float(self.trials), cutoff + half))

    def to_dict(self) -> dict:
        return {"type": "binomial", "trials": int(self.trials)}


NoiseModel = GaussianNoise | BinomialNoise


def density(model: NoiseModel, z, u):
    """p(z | u) with respect to the model's reference measure."""
    return model.density(z, u)


def cond_cdf(model: NoiseModel, t, u):
    """P(Z <= t | U = u)."""
    return model.cdf(t, u)


def default_window(model: NoiseModel, cutoff: float) -> tuple[float, float]:
    """Support window for the weights: three noise sds either side of the cutoff."""
    if not np.isfinite(cutoff):
        raise ValueError("cutoff must be finite")
    if model.discrete and not (0 <= cutoff <= model.trials):
        raise ValueError(f"cutoff {cutoff} outside [0, {model.trials}]")
    return model.default_window(cutoff)


def noise_from_dict(d: dict) -> NoiseModel:
    kind = d.get("type")
    if kind == "gaussian":
        return GaussianNoise(float(d["nu"]))
    if kind == "binomial":
        return BinomialNoise(int(d["trials"]))
    raise ValueError(f"unknown noise type: {kind!r}")
