"""Command-line interface: analyze, weights, curvature, simulate."""
from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys

import numpy as np

from .curvature import CurvatureQuery, all_bounds
from .estimator import SampleBatch
from .grids import RunningGrid, _trapezoid_weights
from .inference import PipelineError, PipelineOptions, design_weights, infer
from .noise import noise_from_dict
from .pilot import estimate_M
from .simulation import SetupSpec, oracle_M, run_mc
from .targets import TargetSpec
from .weights import WeightFunction, compute_h

log = logging.getLogger("nirdd")

M_FLOOR = 0.01

DEFAULTS = {
    "cutoff": None,
    "noise": None,
    "target": {"kind": "constant", "M": 1.0},
    "alpha": 0.05,
    "seed": 0,
    "window": None,
    "grid": {"z_points": 400, "u_points": 400, "u_span_nu": 4.0,
             "bias_u_points": 400, "bias_u_span_nu": 10.0, "pilot_u_points": 400},
    "sigma2": None,
    "C": None,
    "beta": 1.0,
    "em": {"max_iter": 500, "tol": 1e-8},
    "regularity_delta": 0.05,
}


class InputError(Exception):
    """Bad input data or configuration (exit code 2)."""


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def read_csv_columns(path: str, required=("z", "y"), optional=("w",)) -> dict:
    """Read named numeric columns; errors cite the offending line number."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file, header row required") from None
        for col in required:
            if col not in header:
                raise InputError(f"missing column: {col}")
        cols = [c for c in (*required, *optional) if c in header]
        idx = {c: header.index(c) for c in cols}
        data = {c: [] for c in cols}
        for row in reader:
            line = reader.line_num
            if not row or all(not x.strip() for x in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            for c in cols:
                try:
                    data[c].append(float(row[idx[c]]))
                except ValueError:
                    raise InputError(f"{path}:{line}: column {c!r}: cannot parse {row[idx[c]]!r} "
                                     "as a number") from None
    return {c: np.asarray(v) for c, v in data.items()}


def write_csv(path, header, columns):
    fh = open(path, "w", newline="", encoding="utf-8") if path else sys.stdout
    try:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in zip(*columns):
            wr.writerow([repr(float(x)) for x in row])
    finally:
        if path:
            fh.close()


def emit_json(obj, path):
    text = json.dumps(obj, indent=2, default=_json_default)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            cfg = _merge(cfg, json.load(fh))
    if getattr(args, "cutoff", None) is not None:
        cfg["cutoff"] = args.cutoff
    if getattr(args, "nu", None) is not None:
        cfg["noise"] = {"type": "gaussian", "nu": args.nu}
    if getattr(args, "trials", None) is not None:
        cfg["noise"] = {"type": "binomial", "trials": args.trials}
    tgt = cfg["target"]
    for flag, key in (("target", "kind"), ("M", "M"), ("M_prime", "M_prime"),
                      ("c_prime", "c_prime"), ("nu_prime", "nu_prime")):
        v = getattr(args, flag, None)
        if v is not None:
            tgt[key] = v
    for flag in ("alpha", "seed", "sigma2"):
        v = getattr(args, flag, None)
        if v is not None:
            cfg[flag] = v
    if getattr(args, "z_points", None):
        cfg["grid"]["z_points"] = args.z_points
    if getattr(args, "u_points", None):
        cfg["grid"]["u_points"] = args.u_points
    if cfg["cutoff"] is None:
        raise InputError("cutoff is required (config key 'cutoff' or --cutoff)")
    if cfg["noise"] is None:
        raise InputError("noise model is required (config key 'noise', --nu or --trials)")
    return cfg


def options_from_config(cfg: dict) -> PipelineOptions:
    g = cfg["grid"]
    return PipelineOptions(
        alpha=float(cfg["alpha"]),
        window=tuple(cfg["window"]) if cfg.get("window") else None,
        z_points=int(g["z_points"]), u_points=int(g["u_points"]), u_span_nu=float(g["u_span_nu"]),
        bias_u_points=int(g["bias_u_points"]), bias_u_span_nu=float(g["bias_u_span_nu"]),
        pilot_u_points=int(g["pilot_u_points"]),
        sigma2=None if cfg.get("sigma2") is None else float(cfg["sigma2"]),
        C=math.inf if cfg.get("C") is None else float(cfg["C"]),
        beta=float(cfg["beta"]),
        em_max_iter=int(cfg["em"]["max_iter"]), em_tol=float(cfg["em"]["tol"]),
        regularity_delta=float(cfg["regularity_delta"]),
    )


def _target(cfg, batch, window) -> tuple[TargetSpec, list]:
    t = dict(cfg["target"])
    notes = []
    if t.get("M") == "auto":
        M = estimate_M(batch.z, batch.y, batch.w, window)
        if M < M_FLOOR:
            notes.append(f"heuristic M={M:.4g} floored at {M_FLOOR}")
            M = M_FLOOR
        t["M"] = M
        notes.append(f"M chosen by heuristic: {M:.6g}")
    if t.get("M_prime") == "auto":
        t["M_prime"] = t["M"]
    try:
        return TargetSpec.from_dict(t), notes
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad target specification: {exc}") from None


def load_batch(path: str, cutoff: float) -> SampleBatch:
    cols = read_csv_columns(path)
    try:
        return SampleBatch(cols["z"], cols["y"], cols.get("w"), cutoff)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def load_f_bar(path):
    cols = read_csv_columns(path, required=("z", "density"), optional=())
    return cols["z"], cols["density"]


def _cell_widths(x):
    """Widths of the cells centred on equispaced points (trapezoid plus half a cell per end)."""
    if x.size < 2:
        raise InputError("imported weights need at least two grid points on each side")
    w = _trapezoid_weights(x)
    w[0] += (x[1] - x[0]) / 2
    w[-1] += (x[-1] - x[-2]) / 2
    return w


def load_weights(path, model, cutoff, window) -> WeightFunction:
    cols = read_csv_columns(path, required=("z", "gamma"), optional=("lambda",))
    order = np.argsort(cols["z"], kind="stable")
    pts, gam = cols["z"][order], cols["gamma"][order]
    above = pts >= cutoff
    if "lambda" in cols:
        lam = cols["lambda"][order]
    elif model.discrete:
        lam = np.ones_like(pts)
    else:
        lam = np.concatenate([_cell_widths(pts[~above]), _cell_widths(pts[above])])
    lo, hi = window
    if pts[0] < lo or pts[-1] > hi:
        raise InputError(f"{path}: weight grid extends beyond the window [{lo}, {hi}]")
    grid = RunningGrid(pts, lam, float(cutoff), int(np.argmax(above)), (float(lo), float(hi)))
    return WeightFunction(gam, grid, model.discrete, {"imported_from": path})


def _prepare(args):
    cfg = resolve_config(args)
    model = noise_from_dict(cfg["noise"])
    cutoff = float(cfg["cutoff"])
    opts = options_from_config(cfg)
    return cfg, model, cutoff, opts


def cmd_analyze(args) -> int:
    cfg, model, cutoff, opts = _prepare(args)
    batch = load_batch(args.input, cutoff)
    target, notes = _target(cfg, batch, opts.window or model.default_window(cutoff))
    f_bar = load_f_bar(args.f_bar) if args.f_bar else None
    window = opts.window or model.default_window(cutoff)
    weights = load_weights(args.weights, model, cutoff, window) if args.weights else None
    design = design_weights(batch.z, batch.y, batch.w, cutoff, model, target, opts, f_bar=f_bar,
                            weights=weights)
    report = infer(batch, design, opts.alpha, opts.regularity_delta)
    report.warnings.extend(notes)
    cfg["target"] = target.to_dict()
    report.config = {**cfg, "input": args.input, "f_bar_path": args.f_bar,
                     "weights_path": args.weights, "options": opts.to_dict()}
    emit_json(report.to_dict(), args.output)
    return 0


def cmd_weights(args) -> int:
    cfg, model, cutoff, opts = _prepare(args)
    f_bar = load_f_bar(args.f_bar) if args.f_bar else None
    batch = load_batch(args.input, cutoff)
    target, notes = _target(cfg, batch, opts.window or model.default_window(cutoff))
    design = design_weights(batch.z, batch.y, batch.w, cutoff, model, target, opts, f_bar=f_bar)
    wf = design.weights
    write_csv(args.output, ["z", "gamma", "lambda"], [wf.grid.points, wf.gamma, wf.grid.lambda_weights])
    if args.h_output:
        h = compute_h(wf, model, design.pilot.atoms)
        write_csv(args.h_output, ["u", "h_plus", "h_minus", "g_bar"],
                  [design.pilot.atoms, h.h_plus, h.h_minus, design.pilot.g_bar])
    if args.meta_output:
        cfg["target"] = target.to_dict()
        emit_json({"config": {**cfg, "options": opts.to_dict()}, "diagnostics": wf.diagnostics,
                   "notes": notes}, args.meta_output)
    return 0


def cmd_curvature(args) -> int:
    try:
        q = CurvatureQuery(args.M, args.nu, args.rho)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = all_bounds(q)
    out["config"] = {"command": "curvature", "M": args.M, "nu": args.nu, "rho": args.rho,
                     "seed": args.seed, "grid_points": 200}
    emit_json(out, args.output)
    return 0


def _parse_M(v):
    return v if v == "oracle" else float(v)


def cmd_simulate(args) -> int:
    methods = {}
    for m in args.M or ["1", "oracle"]:
        label = "oracle_nir" if m == "oracle" else f"nir_M={m}"
        methods[label] = _parse_M(m)
    opts = PipelineOptions(alpha=args.alpha)
    if args.z_points:
        opts.z_points = args.z_points
    if args.u_points:
        opts.u_points = args.u_points
    rows, summary = [], []
    for n in args.n:
        for par in args.noise:
            setup = SetupSpec(args.setup, n, par, args.seed)
            res = run_mc(setup, methods, reps=args.reps, base_seed=args.seed, options=opts,
                         reuse_weights=not args.no_reuse, jobs=args.jobs, progress=True)
            for label, r in res.items():
                row = {"setup": args.setup, "n": n, "noise": par, "method": label, "M": r.M,
                       "coverage": r.coverage, "length": r.mean_length, "width": r.mean_width,
                       "mae": r.mae, "mean_B_hat": r.mean_B_hat, "mean_se": r.mean_se,
                       "replications": r.replications, "failures": r.failures,
                       "weights_reused": r.weights_reused}
                rows.append(row)
                summary.append({**row, "failure_messages": r.failure_messages})
    header = list(rows[0])
    fh = open(args.csv, "w", newline="", encoding="utf-8") if args.csv else sys.stdout
    try:
        wr = csv.DictWriter(fh, fieldnames=header)
        wr.writeheader()
        wr.writerows(rows)
    finally:
        if args.csv:
            fh.close()
    table = {"setup": args.setup, "noise_label": "nu^2" if args.setup <= 2 else "K",
             "noise_values": args.noise, "n_values": args.n, "reps": args.reps,
             "oracle_M": oracle_M(args.setup), "seed": args.seed, "alpha": args.alpha,
             "length_definition": "mean interval half-length", "cells": summary,
             "config": {"options": opts.to_dict(), "reuse_weights": not args.no_reuse,
                        "jobs": args.jobs}}
    if args.output or not args.csv:
        emit_json(table, args.output)
    return 0


def _shared(p, config=True):
    if config:
        p.add_argument("--config", metavar="PATH", help="JSON configuration file")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    p.add_argument("--alpha", type=float, default=None, help="significance level (default 0.05)")
    p.add_argument("--output", metavar="PATH", help="output file (default stdout)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")


def _design_flags(p):
    p.add_argument("--cutoff", type=float, help="treatment cutoff c")
    p.add_argument("--nu", type=float, help="Gaussian noise sd")
    p.add_argument("--trials", type=int, help="binomial trials (count-scale running variable)")
    p.add_argument("--target", choices=["constant", "rd_param", "cutoff_change", "noise_change"],
                   help="estimand (default constant)")
    p.add_argument("--M", type=lambda v: v if v == "auto" else float(v),
                   help="bound on the variation of E[Y(0)|U] (default 1; 'auto' for the heuristic)")
    p.add_argument("--M-prime", dest="M_prime", type=lambda v: v if v == "auto" else float(v),
                   help="bound on the variation of tau(u) for targeted estimands")
    p.add_argument("--c-prime", dest="c_prime", type=float, help="alternative cutoff / evaluation point")
    p.add_argument("--nu-prime", dest="nu_prime", type=float, help="alternative noise level")
    p.add_argument("--sigma2", type=float, help="outcome variance for weight design "
                   "(default: residual variance of Y ~ Z*W)")
    p.add_argument("--z-points", dest="z_points", type=int, help="running grid size (default 400)")
    p.add_argument("--u-points", dest="u_points", type=int, help="latent grid size (default 400)")
    p.add_argument("--f-bar", dest="f_bar", metavar="PATH",
                   help="CSV (z,density) pilot density; bypasses the NPMLE fit")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nirdd", description=__doc__,
                                 formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="bias-aware interval for a CSV data set",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       description="Input CSV needs columns z and y (w optional, must equal 1{z >= c}).\n"
                       "Config keys and defaults:\n" + json.dumps(DEFAULTS, indent=2))
    p.add_argument("--input", required=True, metavar="CSV")
    p.add_argument("--weights", metavar="PATH", help="CSV (z,gamma[,lambda]) of precomputed weights")
    _shared(p)
    _design_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("weights", help="export designed weights and balance functions",
                       formatter_class=argparse.RawDescriptionHelpFormatter,
                       description="Writes (z,gamma,lambda); with --h-output also (u,h_plus,h_minus,g_bar).\n"
                       "Config keys and defaults:\n" + json.dumps(DEFAULTS, indent=2))
    p.add_argument("--input", required=True, metavar="CSV",
                   help="data for the pilot density and sigma^2")
    p.add_argument("--h-output", dest="h_output", metavar="PATH")
    p.add_argument("--meta-output", dest="meta_output", metavar="PATH",
                   help="JSON with resolved config and solver diagnostics")
    _shared(p)
    _design_flags(p)
    p.set_defaults(func=cmd_weights)

    p = sub.add_parser("curvature", help="noise-implied derivative bounds (Gaussian noise)")
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--rho", type=float, required=True, help="lower bound on the density of Z at z")
    _shared(p, config=False)
    p.set_defaults(func=cmd_curvature)

    p = sub.add_parser("simulate", help="Monte Carlo coverage study on the synthetic setups")
    p.add_argument("--setup", type=int, choices=[1, 2, 3, 4], required=True)
    p.add_argument("--n", type=int, nargs="+", default=[1000])
    p.add_argument("--noise", type=float, nargs="+", required=True,
                   help="nu^2 for setups 1-2, K for setups 3-4")
    p.add_argument("--reps", type=int, default=500)
    p.add_argument("--M", action="append", help="M value or 'oracle'; repeatable (default 1 and oracle)")
    p.add_argument("--csv", metavar="PATH", help="CSV with one row per cell and method")
    p.add_argument("--no-reuse", action="store_true", help="redesign weights in every replication")
    p.add_argument("--z-points", dest="z_points", type=int)
    p.add_argument("--u-points", dest="u_points", type=int)
    _shared(p, config=False)
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "seed", None) is None:
        args.seed = 0
    if args.command == "simulate" and args.alpha is None:
        args.alpha = 0.05
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
