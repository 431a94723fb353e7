"""Estimand specifications and their latent weight functions."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .noise import GaussianNoise, NoiseModel
from .pilot import PilotDensity

KINDS = ("constant", "rd_param", "cutoff_change", "noise_change")


@dataclass(frozen=True)
class TargetSpec:
    """What the interval is for.

    ``constant``: a constant effect (or the h_+-weighted effect under heterogeneity).
    ``rd_param``: E[tau(U) | Z = c_prime].
    ``cutoff_change``: the average effect for units with c_prime <= Z < c.
    ``noise_change``: the (normalized) effect of switching the noise level to nu_prime.
    """

    kind: str = "constant"
    M: float = 1.0
    M_prime: float = 0.0
    c_prime: float | None = None
    nu_prime: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}; expected one of {KINDS}")
        if not (math.isfinite(self.M) and self.M > 0):
            raise ValueError("M must be positive and finite")
        if not (math.isfinite(self.M_prime) and self.M_prime >= 0):
            raise ValueError("M_prime must be nonnegative and finite")
        if self.kind in ("rd_param", "cutoff_change") and self.c_prime is None:
            raise ValueError(f"{self.kind} requires c_prime")
        if self.kind == "noise_change" and not (self.nu_prime and self.nu_prime > 0):
            raise ValueError("noise_change requires a positive nu_prime")

    @property
    def weighted(self) -> bool:
        return self.kind != "constant"

    def with_M(self, M: float) -> "TargetSpec":
        d = asdict(self)
        d["M"] = M
        return TargetSpec(**d)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict) -> "TargetSpec":
        d = dict(d)
        return cls(kind=d.pop("kind", "constant"), **{k: float(v) for k, v in d.items()})


@dataclass
class WBar:
    values: np.ndarray
    mixed_sign: bool = False


def make_wbar(spec: TargetSpec, model: NoiseModel, latent_points, pilot: PilotDensity,
              cutoff: float, samples_z=None) -> WBar:
    """Latent weight function proportional to the target's w(u), on ``latent_points``."""
    u = np.asarray(getattr(latent_points, "points", latent_points), dtype=float)
    if spec.kind == "constant":
        raise ValueError("a constant-effect target has no latent weight function")
    if spec.kind == "rd_param":
        f_hat = pilot.density(model, spec.c_prime)
        if not f_hat >= 1e-12:
            raise ValueError(f"estimated density at c'={spec.c_prime} is {f_hat:.3g}; "
                             "target lies outside the data support")
        return WBar(model.density(spec.c_prime, u) / f_hat)
    if spec.kind == "cutoff_change":
        if not spec.c_prime < cutoff:
            raise ValueError("cutoff_change requires c_prime < cutoff")
        if samples_z is None:
            raise ValueError("cutoff_change needs the sample to estimate P(c' <= Z < c)")
        z = np.asarray(samples_z, dtype=float)
        mass = np.mean((z >= spec.c_prime) & (z < cutoff))
        if mass == 0:
            raise ValueError(f"no sample falls in [{spec.c_prime}, {cutoff})")
        vals = np.maximum(model.prob_between(spec.c_prime, cutoff, u), 0.0)
        return WBar(vals / mass)
    # noise_change
    if not isinstance(model, GaussianNoise):
        raise ValueError("noise_change requires a Gaussian noise model")
    diff = stats.norm.cdf((cutoff - u) / spec.nu_prime) - stats.norm.cdf((cutoff - u) / model.nu)
    if np.max(np.abs(diff)) < 1e-12:
        raise ValueError("null policy: nu_prime equals nu, the policy changes no assignment")
    atoms_diff = (stats.norm.cdf((cutoff - pilot.atoms) / spec.nu_prime)
                  - stats.norm.cdf((cutoff - pilot.atoms) / model.nu))
    K_hat = float(atoms_diff @ pilot.g_bar)
    if abs(K_hat) < 1e-12:
        raise ValueError("noise_change normalizer vanishes under the pilot distribution")
    vals = diff / K_hat
    mixed = bool(np.any(vals > 1e-12) and np.any(vals < -1e-12))
    return WBar(vals, mixed)
