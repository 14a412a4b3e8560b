"""Command-line interface.

Subcommands: ``fit``, ``sweep``, ``band``, ``em``, ``simulate``, ``pool`` and
``identify``. Tables are written as CSV and single fits as JSON. Exit codes are
0 on success, 1 on usage or input errors and 2 on numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .em import EmOptions, em_fit
from .errors import SemisensError
from .estimator import FitOptions, FitResult, fit, sweep, tipping_point
from .ident import ObservedCells, identify
from .model import BERNOULLI, GAUSSIAN, Dataset, ModelSpec, SensitivityPoint, parse_prior
from .simstudy import DgpSpec, design_cells, run_study, study_row, write_csv
from .uncertainty import rubin_pool, uniform_band

SWEEP_COLUMNS = ["delta", "gamma", "beta_hat", "se", "ci_lo", "ci_hi", "converged",
                 "interpretation_gamma_factor", "interpretation_delta_factor"]
BAND_COLUMNS = SWEEP_COLUMNS + ["c_hat", "band_lo", "band_hi"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --- input -------------------------------------------------------------------

@dataclass
class Roles:
    outcome: str
    treatment: str
    covariates: list[str]


def _binary(value: float, name: str, row: int) -> float:
    if value not in (0.0, 1.0):
        raise UsageError(f"{name} must be 0 or 1; found {value:g} in data row {row}")
    return value


def ingest(path: str, roles: Roles, family: str = BERNOULLI) -> Dataset:
    """Read a comma-separated file with a header row into a :class:`Dataset`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise UsageError(f"{path} is empty")
        header = [h.strip() for h in header]
        needed = [roles.outcome, roles.treatment, *roles.covariates]
        for col in needed:
            if col not in header:
                raise UsageError(f"column {col!r} not found in {path}")
        idx = [header.index(c) for c in needed]
        rows, incomplete = [], 0
        for line in reader:
            if not line or all(not c.strip() for c in line):
                continue
            cells = [line[i].strip() if i < len(line) else "" for i in idx]
            if any(c == "" for c in cells):
                incomplete += 1
                continue
            rows.append(cells)
    if incomplete:
        raise UsageError(f"{incomplete} incomplete row{'s' if incomplete > 1 else ''} in {path}")
    if not rows:
        raise UsageError(f"{path} has no data rows")
    try:
        values = np.array(rows, dtype=float)
    except ValueError as exc:
        raise UsageError(f"non-numeric value in {path}: {exc}") from exc
    for r, (yv, zv) in enumerate(values[:, :2], start=1):
        _binary(zv, roles.treatment, r)
        if family == BERNOULLI:
            _binary(yv, roles.outcome, r)
    n = values.shape[0]
    X = np.column_stack([np.ones(n), values[:, 2:]])
    return Dataset(values[:, 0], values[:, 1], X)


def _floats(text: str, name: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"cannot parse {name} {text!r}") from exc
    if not vals:
        raise UsageError(f"{name} is empty")
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise UsageError(f"{name} must be strictly increasing")
    return vals


def _grid(args) -> list[SensitivityPoint]:
    if args.path:
        return [SensitivityPoint(t, t) for t in _floats(args.path, "--path")]
    if args.deltas is None or args.gammas is None:
        raise UsageError("give --path, or both --deltas and --gammas")
    ds = _floats(args.deltas, "--deltas")
    gs = _floats(args.gammas, "--gammas")
    return [SensitivityPoint(d, g) for d in ds for g in gs]


# --- reporting -----------------------------------------------------------------

def interpretation_factors(sp: SensitivityPoint, spec: ModelSpec, sigma: float = 1.0):
    """``(exp(gamma), exp(delta))`` for a logistic outcome, ``(exp(gamma), delta / sigma)`` otherwise."""
    g = math.exp(sp.gamma)
    d = sp.delta / sigma if spec.outcome_family == GAUSSIAN else math.exp(sp.delta)
    return g, d


def interpretation(sp: SensitivityPoint, spec: ModelSpec, sigma: float = 1.0) -> list[str]:
    g, d = interpretation_factors(sp, spec, sigma)
    lines = [f"Units with the same observed covariates could differ in their odds of receiving the "
             f"treatment by at most a factor of {g:.2f} because of U (U scaled to [0, 1])."]
    if spec.outcome_family == GAUSSIAN:
        lines.append(f"Units with the same covariates and treatment could differ in mean outcome by at "
                     f"most {d:.2f} standard deviations because of U.")
    else:
        lines.append(f"Units with the same covariates and treatment could differ in their odds of the "
                     f"outcome by at most a factor of {d:.2f} because of U.")
    return lines


def report(result, spec: ModelSpec = ModelSpec(), sigma: float = 1.0) -> str:
    """Human-readable summary of a fit or a list of sweep rows."""
    rows = [result] if isinstance(result, FitResult) else list(result)
    out = []
    for r in rows:
        if isinstance(r, FitResult):
            sp, b, se, (lo, hi), ok = r.sp, r.beta_hat, r.beta_se, r.ci, r.converged
        else:
            sp, b, se, lo, hi, ok = SensitivityPoint(r.delta, r.gamma), r.beta_hat, r.se, r.ci_lo, r.ci_hi, r.converged
        flag = "" if ok else "  [not converged]"
        out.append(f"delta = {sp.delta:g}, gamma = {sp.gamma:g}: beta_hat = {b:.4f} (se {se:.4f}), "
                   f"CI [{lo:.4f}, {hi:.4f}]{flag}")
        out.extend("  " + s for s in interpretation(sp, spec, sigma))
    return "\n".join(out) + "\n"


def _num(x) -> str:
    # shortest round-trip text of a plain float
    return repr(float(x))


def _sweep_record(row, spec, sigma):
    g, d = interpretation_factors(SensitivityPoint(row.delta, row.gamma), spec, sigma)
    return {"delta": _num(row.delta), "gamma": _num(row.gamma), "beta_hat": _num(row.beta_hat),
            "se": _num(row.se), "ci_lo": _num(row.ci_lo), "ci_hi": _num(row.ci_hi),
            "converged": str(bool(row.converged)).lower(),
            "interpretation_gamma_factor": _num(g), "interpretation_delta_factor": _num(d)}


def _write_table(rows, columns, fh):
    w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)


# --- subcommands ---------------------------------------------------------------

def _spec(args) -> ModelSpec:
    return ModelSpec(args.family)


def _data(args) -> Dataset:
    covs = [c.strip() for c in args.covariates.split(",") if c.strip()] if args.covariates else []
    return ingest(args.data, Roles(args.outcome, args.treatment, covs), args.family)


def _options(args) -> FitOptions:
    try:
        prior = parse_prior(args.prior)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return FitOptions(prior=prior, alpha=args.alpha, sigma=args.sigma)


def cmd_fit(args, out):
    data, spec = _data(args), _spec(args)
    opts = _options(args)
    res = fit(data, SensitivityPoint(args.delta, args.gamma), opts, spec, args.level)
    doc = res.to_dict(include_influence=args.influence)
    g, d = interpretation_factors(res.sp, spec, args.sigma)
    doc["interpretation_gamma_factor"] = g
    doc["interpretation_delta_factor"] = d
    doc["prior"] = opts.prior.label
    if args.tipping is not None:
        tp = tipping_point(data, args.tipping, opts, spec, args.level)
        doc["tipping_point"] = tp.t_star
    json.dump(doc, out, indent=2)
    out.write("\n")
    if args.report:
        sys.stderr.write(report(res, spec, args.sigma))


def cmd_sweep(args, out):
    data, spec = _data(args), _spec(args)
    res = sweep(data, _grid(args), _options(args), spec, args.level)
    _write_table([_sweep_record(r, spec, args.sigma) for r in res.rows], SWEEP_COLUMNS, out)
    if args.report:
        sys.stderr.write(report(res.rows, spec, args.sigma))


def cmd_band(args, out):
    data, spec = _data(args), _spec(args)
    res = sweep(data, _grid(args), _options(args), spec, args.level)
    band = uniform_band(res.fits, args.level, args.B, args.seed)
    rows = []
    for row, (lo, hi) in zip(res.rows, band.band):
        rec = _sweep_record(row, spec, args.sigma)
        rec.update(c_hat=_num(band.c_hat), band_lo=_num(lo), band_hi=_num(hi))
        rows.append(rec)
    _write_table(rows, BAND_COLUMNS, out)


def cmd_em(args, out):
    if args.family != BERNOULLI:
        raise UsageError("em supports --family bernoulli only")
    data = _data(args)
    res = em_fit(data, SensitivityPoint(args.delta, args.gamma), EmOptions(p=args.p), ModelSpec(), args.level)
    doc = res.to_dict()
    doc["p"] = args.p
    doc["loglik_trace"] = res.loglik_trace
    json.dump(doc, out, indent=2)
    out.write("\n")


def cmd_simulate(args, out):
    try:
        cells = design_cells(args.design, args.n, args.h)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    rows = []
    for kind, method, n in cells:
        dgp = DgpSpec(kind, n, args.seed)
        m = run_study(dgp, method, reps=args.reps, level=args.level, seed=args.seed)
        rows.append(study_row(kind, method, n, m))
    write_csv(rows, out)


def _read_fit(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    try:
        return float(doc["beta_hat"]), float(doc["se"])
    except KeyError as exc:
        raise UsageError(f"{path} lacks field {exc}") from exc


def cmd_pool(args, out):
    paths = [p for p in args.inputs.split(",") if p]
    if len(paths) < 2:
        raise UsageError("pool needs at least two input fits")
    pooled = rubin_pool([_read_fit(p) for p in paths], args.level)
    json.dump({"beta_hat": pooled.beta, "se": pooled.se, "ci_lo": pooled.ci[0], "ci_hi": pooled.ci[1],
               "within": pooled.within, "between": pooled.between, "total": pooled.total,
               "m": pooled.m, "level": args.level}, out, indent=2)
    out.write("\n")


def cmd_identify(args, out):
    if args.cells:
        vals = [float(v) for v in args.cells.split(",")]
        if len(vals) != 4:
            raise UsageError("--cells takes L00,L01,L10,L11")
        cells = ObservedCells.normalized(vals)
    elif args.data:
        data = ingest(args.data, Roles(args.outcome, args.treatment, []), BERNOULLI)
        cells = ObservedCells.from_counts(data.y, data.z)
    else:
        raise UsageError("give --cells or --data")
    try:
        prior = parse_prior(args.prior)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    res = identify(cells, prior, SensitivityPoint(args.delta, args.gamma))
    json.dump({"alpha0": res.alpha0, "beta0": res.beta0, "beta_z": res.beta_z,
               "cells": cells.L.ravel().tolist()}, out, indent=2)
    out.write("\n")


# --- parser --------------------------------------------------------------------

def _data_args(p, grid=False, point=True):
    p.add_argument("--data", required=True, help="comma-separated file with a header row")
    p.add_argument("--outcome", required=True)
    p.add_argument("--treatment", required=True)
    p.add_argument("--covariates", default="", help="comma-separated covariate columns")
    p.add_argument("--family", choices=[BERNOULLI, GAUSSIAN], default=BERNOULLI)
    p.add_argument("--sigma", type=float, default=1.0, help="outcome SD (gaussian family)")
    p.add_argument("--prior", default="bernoulli:0.5", help="bernoulli:p | grid:lo:hi:h | weights:u=w,...")
    p.add_argument("--alpha", type=float, default=0.1, help="Tikhonov parameter for grid priors")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--output", "-o", help="output file (default: stdout)")
    if point:
        p.add_argument("--delta", type=float, default=0.0)
        p.add_argument("--gamma", type=float, default=0.0)
    if grid:
        p.add_argument("--deltas", help="comma-separated delta values")
        p.add_argument("--gammas", help="comma-separated gamma values")
        p.add_argument("--path", help="comma-separated t values for delta = gamma = t")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="semisens", description="Semiparametric sensitivity analysis for unmeasured confounding.")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit at one (delta, gamma)")
    _data_args(p)
    p.add_argument("--influence", action="store_true", help="include per-observation influence values")
    p.add_argument("--report", action="store_true", help="print an interpretation report to stderr")
    p.add_argument("--tipping", type=float, metavar="T", help="also search delta = gamma = t on [0, T]")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("sweep", help="fit over a grid of sensitivity points")
    _data_args(p, grid=True, point=False)
    p.add_argument("--report", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("band", help="uniform band over a grid of sensitivity points")
    _data_args(p, grid=True, point=False)
    p.add_argument("--B", type=int, default=1000, help="multiplier draws")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_band)

    p = sub.add_parser("em", help="EM maximum likelihood with U ~ Bernoulli(p)")
    _data_args(p)
    p.add_argument("--p", type=float, required=True)
    p.set_defaults(func=cmd_em)

    p = sub.add_parser("simulate", help="Monte Carlo study of a named design")
    p.add_argument("--design", required=True, choices=["table1", "table2", "table3", "d2"])
    p.add_argument("--n", type=int)
    p.add_argument("--h", type=float, help="restrict grid designs to one mesh")
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pool", help="Rubin's rules over JSON fits")
    p.add_argument("--inputs", required=True, help="comma-separated JSON fit files")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("identify", help="closed-form inversion for binary U, Z, Y without covariates")
    p.add_argument("--cells", help="L00,L01,L10,L11 (indexed [y, z])")
    p.add_argument("--data")
    p.add_argument("--outcome", default="y")
    p.add_argument("--treatment", default="z")
    p.add_argument("--prior", required=True, help="law of U given Y = 0, Z = 0")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_identify)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 1
    buf = io.StringIO()
    try:
        args.func(args, buf)
    except (UsageError, FileNotFoundError) as exc:
        sys.stderr.write(f"semisens {args.command}: {exc}\n")
        return 1
    except SemisensError as exc:
        sys.stderr.write(f"semisens {args.command}: numerical failure: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"semisens {args.command}: {exc}\n")
        return 1
    text = buf.getvalue()
    if getattr(args, "output", None):
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
