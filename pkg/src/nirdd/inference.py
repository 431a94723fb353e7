"""Bias-aware confidence intervals and the end-to-end estimation pipeline."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from . import bias as bias_mod
from .estimator import SampleBatch, plugin_variance, ratio_estimate
from .grids import (LatentGrid, RunningGrid, build_latent_grid, build_running_grid, latent_span,
                    uniform_latent_grid)
from .noise import NoiseModel, default_window
from .pilot import PilotDensity, estimate_sigma2, npmle_em
from .targets import TargetSpec, make_wbar
from .weights import QPOptions, WeightFunction, check_regularity, compute_h, solve_weights


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def bias_aware_halfwidth(B: float, se: float, alpha: float = 0.05) -> float:
    """Smallest l with P(|B + se * Z| <= l) >= 1 - alpha, Z standard normal.

    Coverage of a centred interval falls as |b| grows, so b = B is the worst case.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if B < 0 or se < 0:
        raise ValueError("B and se must be nonnegative")
    if B == 0 and se == 0:
        raise ValueError("B and se cannot both be zero")
    zq = stats.norm.ppf(1 - alpha / 2)
    if se == 0:
        return float(B)
    if B == 0:
        return float(zq * se)

    def gap(ell):
        return stats.norm.cdf((ell - B) / se) - stats.norm.cdf((-ell - B) / se) - (1 - alpha)

    lo = max(B, 0.5 * zq * se)
    hi = B + zq * se + 1
    return float(optimize.bisect(gap, lo, hi, xtol=1e-10, maxiter=500))


@dataclass
class PipelineOptions:
    alpha: float = 0.05
    window: tuple | None = None
    z_points: int = 400
    u_points: int = 400
    u_span_nu: float = 4.0
    bias_u_points: int = 400
    bias_u_span_nu: float = 10.0
    pilot_u_points: int = 400
    grid_scheme: str = "midpoint"
    sigma2: float | None = None
    sigma2_floor: float = 1e-8
    C: float = math.inf
    beta: float = 1.0
    em_max_iter: int = 500
    em_tol: float = 1e-8
    regularity_delta: float = 0.05

    def to_dict(self) -> dict:
        d = asdict(self)
        d["C"] = None if math.isinf(self.C) else self.C
        return d


@dataclass
class Design:
    """Everything the weights depend on, fixed before outcomes are looked at."""

    model: NoiseModel
    cutoff: float
    target: TargetSpec
    running_grid: RunningGrid
    latent_grid: LatentGrid
    bias_grid: LatentGrid
    pilot: PilotDensity
    f_bar: np.ndarray
    sigma2: float
    n: int
    weights: WeightFunction
    wbar: np.ndarray | None = None
    mixed_sign: bool = False
    f_hat_override: object = None


@dataclass
class EstimateReport:
    tau_hat: float
    se: float
    B_hat: float
    halfwidth: float
    ci: tuple
    alpha: float
    target: dict
    n: int
    V_hat: float = 0.0
    mu_plus: float = math.nan
    mu_minus: float = math.nan
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def covers(self, value: float) -> bool:
        return self.ci[0] <= value <= self.ci[1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci"] = list(self.ci)
        return d


def _pilot_grid(model: NoiseModel, z, cutoff, opts: PipelineOptions) -> LatentGrid:
    lo, hi = latent_span(model, cutoff, opts.u_span_nu)
    if model.discrete:
        k = model.trials
        lo = min(lo, max(1e-4, (z.min() - model.scale) / k))
        hi = max(hi, min(1 - 1e-4, (z.max() + model.scale) / k))
    else:
        lo = min(lo, z.min() - model.nu)
        hi = max(hi, z.max() + model.nu)
    return uniform_latent_grid(lo, hi, opts.pilot_u_points)


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage attached
        raise PipelineError(name, exc) from exc


def fit_pilot(z, model: NoiseModel, cutoff: float, running_grid: RunningGrid,
              opts: PipelineOptions) -> PilotDensity:
    grid = _pilot_grid(model, np.asarray(z, dtype=float), cutoff, opts)
    return npmle_em(z, model, grid, opts.em_max_iter, opts.em_tol, running_grid=running_grid)


def design_weights(z, y, w, cutoff: float, model: NoiseModel, target: TargetSpec,
                   options: PipelineOptions | None = None, n: int | None = None,
                   f_bar=None, weights: WeightFunction | None = None) -> Design:
    """Pilot density, sigma^2, grids, target weights and the QP solve.

    ``z, y, w`` are the data used for the pilot; pass an independent sample to keep
    the weights independent of the analysis data. ``f_bar`` optionally supplies the
    marginal density as a pair of arrays (z, density) and bypasses the NPMLE fit for
    the QP objective. Passing ``weights`` skips the QP and uses them as given.
    """
    opts = options or PipelineOptions()
    z = np.asarray(z, dtype=float)
    n = int(n if n is not None else z.size)
    window = opts.window or default_window(model, cutoff)
    rgrid = _stage("grids", build_running_grid, model, window, cutoff, opts.z_points, opts.grid_scheme)
    lgrid = _stage("grids", build_latent_grid, model, cutoff, opts.u_points, opts.u_span_nu)
    bgrid = _stage("grids", build_latent_grid, model, cutoff, opts.bias_u_points, opts.bias_u_span_nu)

    pilot = _stage("pilot", fit_pilot, z, model, cutoff, rgrid, opts)
    fbar = pilot.f_bar
    f_hat_override = None
    if f_bar is not None:
        fz, fd = (np.asarray(a, dtype=float) for a in f_bar)
        fbar = np.interp(rgrid.points, fz, fd, left=0.0, right=0.0)
        f_hat_override = (fz, fd)
    if not np.all(fbar[1:-1] > 0):
        raise PipelineError("pilot", ValueError("pilot density must be positive inside the window"))

    if opts.sigma2 is not None:
        sigma2 = float(opts.sigma2)
    else:
        sigma2 = _stage("sigma2", estimate_sigma2, z, y, w)
    sigma2 = max(sigma2, opts.sigma2_floor)

    wbar, mixed = None, False
    if target.weighted:
        pil = pilot
        if f_hat_override is not None and target.kind == "rd_param":
            fz, fd = f_hat_override
            pil = _FixedDensity(pilot, float(np.interp(target.c_prime, fz, fd)))
        res = _stage("target", make_wbar, target, model, lgrid, pil, cutoff, z)
        wbar, mixed = res.values, res.mixed_sign

    if weights is None:
        qp = QPOptions(C=opts.C, beta=opts.beta)
        weights = _stage("weights", solve_weights, model, rgrid, lgrid, fbar, sigma2, n, target,
                         wbar, qp)
    else:
        rgrid = weights.grid
    return Design(model, cutoff, target, rgrid, lgrid, bgrid, pilot, fbar, sigma2, n, weights,
                  wbar, mixed, f_hat_override)


class _FixedDensity:
    """Pilot stand-in whose marginal density is a supplied constant (for f(c'))."""

    def __init__(self, pilot, value):
        self.atoms, self.g_bar, self._value = pilot.atoms, pilot.g_bar, value

    def density(self, model, z):
        return self._value


def infer(batch: SampleBatch, design: Design, alpha: float = 0.05,
          regularity_delta: float = 0.05, target: TargetSpec | None = None) -> EstimateReport:
    """Point estimate, plug-in variance, worst-case bias and the bias-aware interval.

    ``target`` may override the design's target to re-bound the same weights
    under a different M (the weights themselves are not re-solved).
    """
    target = target or design.target
    model = design.model
    wts = design.weights
    warns = []
    est = _stage("estimate", ratio_estimate, batch, wts)
    V = _stage("variance", plugin_variance, batch, wts, est.mu_plus, est.mu_minus)
    se = math.sqrt(V / batch.n)
    band = _stage("band", bias_mod.build_band, batch.z, model, design.running_grid)
    h = _stage("bias", compute_h, wts, model, design.bias_grid)
    wbar_b = None
    if target.weighted:
        pil = design.pilot
        if design.f_hat_override is not None and target.kind == "rd_param":
            fz, fd = design.f_hat_override
            pil = _FixedDensity(pil, float(np.interp(target.c_prime, fz, fd)))
        wbar_b = _stage("target", make_wbar, target, model, design.bias_grid, pil, design.cutoff,
                        batch.z).values
    B = _stage("bias", bias_mod.worst_case_bias, h, band, model, design.bias_grid, target, wbar_b)
    if B == 0 and se == 0:
        warns.append("zero bias bound and zero standard error; interval is a point")
        half = 0.0
    else:
        half = _stage("interval", bias_aware_halfwidth, B, se, alpha)
    if design.mixed_sign:
        warns.append("target weight function changes sign across the latent grid")
    reg = check_regularity(wts, batch.z, regularity_delta)
    if not reg["passed"]:
        warns.append("regularity check failed: mean weight below delta on at least one side")
    diagnostics = {
        "weights": dict(wts.diagnostics),
        "regularity": reg,
        "band_radius": band.radius,
        "n_eff_plus": est.n_eff_plus,
        "n_eff_minus": est.n_eff_minus,
        "sigma2": design.sigma2,
        "window": list(design.running_grid.window),
        "pilot_loglik": design.pilot.loglik,
        "pilot_iterations": design.pilot.n_iter,
    }
    return EstimateReport(
        tau_hat=est.tau_hat, se=se, B_hat=B, halfwidth=half,
        ci=(est.tau_hat - half, est.tau_hat + half), alpha=alpha, target=target.to_dict(),
        n=batch.n, V_hat=V, mu_plus=est.mu_plus, mu_minus=est.mu_minus,
        diagnostics=diagnostics, warnings=warns)


def run_pipeline(batch: SampleBatch, model: NoiseModel, target: TargetSpec,
                 options: PipelineOptions | None = None, f_bar=None) -> EstimateReport:
    """Pilot, weight design, estimate, variance, bias bound and interval on one sample."""
    opts = options or PipelineOptions()
    design = design_weights(batch.z, batch.y, batch.w, batch.cutoff, model, target, opts, f_bar=f_bar)
    report = infer(batch, design, opts.alpha, opts.regularity_delta)
    report.config = {"cutoff": batch.cutoff, "noise": model.to_dict(), "target": target.to_dict(),
                     "options": opts.to_dict(), "f_bar_supplied": f_bar is not None}
    return report
