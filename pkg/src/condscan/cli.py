"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from typing import Optional

import numpy as np

from . import __version__
from .csvio import DataError, read_table, write_table
from .genlab import (GENERATORS, DiscreteJoint, GeneratorSpec, generate, oracle_is_independent,
                     oracle_max_abs_cov, random_joint)
from .grid import (BoundedGrid, LocalWindows, UpperTails, build_grid, interval_label,
                   report_rectangle, scan, support_product_check)
from .inference import MIN_REPLICATES, permutation_test, thread_count
from .moments import PairedSample, conditional_correlation, moments_of
from .multivar import DEFAULT_BUDGET, MultiSample, cond_corr_matrix, mutual_scan

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
INDEPENDENCE_TOL = 1e-12
# |cor(fitted, residual)| above this means the least-squares fit is off.
OLS_ORTHOGONALITY_TOL = 1e-8
# Residual sd below this fraction of the response scale counts as zero.
ZERO_RESIDUAL_RTOL = 1e-10


class ConfigError(Exception):
    """Invalid combination or range of options."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- formatting ------------------------------------------------------------------

def _num(v):
    if v is None:
        return None
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(f"{v:.12g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, str):
        return obj
    return _num(obj)


def _scalar_text(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def _text_lines(obj, indent=0):
    pad = "  " * indent
    lines = []
    for key, value in obj.items():
        if isinstance(value, dict):
            lines.append(f"{pad}{key}:")
            lines.extend(_text_lines(value, indent + 1))
        elif isinstance(value, list) and value and isinstance(value[0], (list, dict)):
            lines.append(f"{pad}{key}:")
            for item in value:
                if isinstance(item, dict):
                    lines.append(f"{pad}  -")
                    lines.extend(_text_lines(item, indent + 2))
                else:
                    lines.append(f"{pad}  - [{', '.join(_scalar_text(v) for v in item)}]")
        elif isinstance(value, list):
            lines.append(f"{pad}{key}: [{', '.join(_scalar_text(v) for v in value)}]")
        else:
            lines.append(f"{pad}{key}: {_scalar_text(value)}")
    return lines


def render(report: dict, fmt: str) -> str:
    report = _clean(report)
    if fmt == "structured":
        return json.dumps(report, indent=2) + "\n"
    return "\n".join(_text_lines(report)) + "\n"


# -- data sources ------------------------------------------------------------------

def _split_cols(text: Optional[str]):
    if text is None:
        return None
    cols = [c.strip() for c in text.split(",") if c.strip()]
    if not cols:
        raise ConfigError("--cols needs at least one column name")
    return cols


def _load(args, min_cols: int, max_cols: Optional[int] = None):
    """Return ``(names, data, source_description)``."""
    if (args.input is None) == (args.gen is None):
        raise ConfigError("give exactly one of --input or --gen")
    cols = _split_cols(args.cols)
    if args.input is not None:
        names, data = read_table(args.input, cols)
        with open(args.input, "rb") as fh:
            digest = hashlib.sha256(fh.read()).hexdigest()
        source = {"input": args.input, "sha256": digest}
    else:
        spec = _gen_spec(args)
        data = generate(spec)
        names = _gen_names(data.shape[1])
        if cols is not None:
            unknown = [c for c in cols if c not in names]
            if unknown:
                raise ConfigError(f"generator columns are {', '.join(names)}; "
                                  f"unknown {', '.join(unknown)}")
            data = data[:, [names.index(c) for c in cols]]
            names = cols
        source = {"gen": spec.kind, "n": spec.n, "seed": spec.seed}
        if spec.kind == "mixture-fp":
            source["p"] = spec.p
    if data.shape[1] < min_cols or (max_cols is not None and data.shape[1] > max_cols):
        want = f"{min_cols}" if max_cols == min_cols else f"at least {min_cols}"
        raise ConfigError(f"this command needs {want} columns, got {data.shape[1]}")
    if data.shape[0] < 2:
        raise DataError("fewer than 2 usable rows")
    return names, data, source


def _gen_names(k: int):
    base = ["x", "y", "z"]
    return base[:k] if k <= 3 else [f"x{i + 1}" for i in range(k)]


def _gen_spec(args) -> GeneratorSpec:
    try:
        return GeneratorSpec(args.gen, args.n, args.seed, args.p, args.dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _config_echo(args) -> dict:
    skip = {"func", "command", "out", "format", "plot_data"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _header(command: str, args) -> dict:
    return {"tool": f"condscan {__version__}", "command": command, "config": _config_echo(args)}


def _check_common(args):
    if args.m_min < 2:
        raise ConfigError("--m-min must be >= 2")
    if args.perm and args.perm < MIN_REPLICATES:
        raise ConfigError(f"--perm must be 0 or >= {MIN_REPLICATES}")
    if args.seed < 0:
        raise ConfigError("--seed must be non-negative")
    if getattr(args, "levels", 2) < 2:
        raise ConfigError("--levels must be >= 2")


def _family(args):
    kind = getattr(args, "family", "bounded")
    if kind == "local":
        if args.eps is None or not args.eps > 0:
            raise ConfigError("--family local needs a positive --eps")
        if args.stride is not None and not 0 < args.stride <= args.eps:
            raise ConfigError("--stride must satisfy 0 < stride <= eps")
        return LocalWindows(args.eps, args.stride)
    return BoundedGrid(args.levels) if kind == "bounded" else UpperTails(args.levels)


# -- report pieces ---------------------------------------------------------------

def _scan_summary(report, names) -> dict:
    out = {"family": report.family}
    out.update(report.params)
    out.update({
        "m_min": report.m_min,
        "rectangles": report.total,
        "skipped": report.skipped_count,
        "truncated": report.truncated,
        "max_abs_cor": report.max_abs_cor,
    })
    k = report.argmax
    if k is None:
        out["argmax"] = None
        return out
    best = {name: interval_label(report, k, ax) for ax, name in enumerate(names)}
    best["m"] = int(report.m[k])
    if report.pair is not None:
        best["pair"] = [names[i] for i in report.pair[k]]
    best["cov"] = report.cov[k]
    best["cor"] = report.cor[k]
    out["argmax"] = best
    return out


def _perm_summary(result) -> dict:
    return {
        "B": result.B,
        "seed": result.seed,
        "observed": result.observed_stat,
        "p_value": result.p_value,
        "null_q95": result.null_quantile(0.95),
    }


def _support_summary(sample, levels) -> dict:
    grid = build_grid(sample, min(levels, sample.n))
    rep = support_product_check(sample, grid)
    return {
        "levels": levels,
        "violation_fraction": rep.fraction,
        "empty_cells": len(rep.cells),
        "occupied": [rep.occupied_rows, rep.occupied_cols],
    }


def _write_plot(path, names, data, mask):
    cols = list(names) + ["in_argmax"]
    table = np.column_stack([data, mask.astype(float)])
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            write_table(fh, cols, table)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None


def _argmax_mask(report, points):
    k = report.argmax
    if k is None:
        return np.zeros(points.shape[0], dtype=bool)
    return report_rectangle(report, k).contains(points)


# -- commands ----------------------------------------------------------------------

def cmd_scan(args) -> dict:
    """Bivariate scan, optionally with a permutation p-value."""
    _check_common(args)
    family = _family(args)
    names, data, source = _load(args, 2, 2)
    sample = PairedSample(data[:, 0], data[:, 1])
    if isinstance(family, LocalWindows):
        report = scan(sample, family, args.m_min)
    else:
        if sample.n < family.levels:
            raise DataError(f"need at least {family.levels} rows for {family.levels} levels")
        report = scan(sample, family, args.m_min)
    out = _header(args.command, args)
    out["data"] = dict(source, rows=sample.n, columns=list(names))
    out["global_cor"] = conditional_correlation(moments_of(sample.x, sample.y))
    out["scan"] = _scan_summary(report, names)
    if args.perm:
        res = permutation_test(sample, family, args.perm, args.seed, args.m_min)
        out["permutation"] = _perm_summary(res)
    levels = getattr(family, "levels", 8)
    out["support"] = _support_summary(sample, levels)
    if args.plot_data:
        _write_plot(args.plot_data, names, data, _argmax_mask(report, data))
    return out


def cmd_local_scan(args) -> dict:
    args.family = "local"
    return cmd_scan(args)


def cmd_mutual_scan(args) -> dict:
    """Largest off-diagonal conditional correlation over hyperrectangles."""
    _check_common(args)
    if args.budget < 1:
        raise ConfigError("--budget must be >= 1")
    names, data, source = _load(args, 2)
    sample = MultiSample(data)
    if sample.n < args.levels:
        raise DataError(f"need at least {args.levels} rows for {args.levels} levels")
    fam = None if args.family == "auto" else args.family
    report = mutual_scan(sample, args.levels, args.m_min, args.budget, fam)
    out = _header("mutual-scan", args)
    out["data"] = dict(source, rows=sample.n, columns=list(names))
    full = cond_corr_matrix(sample, report_rectangle_full(sample.d))
    out["global_matrix"] = full.matrix
    out["scan"] = _scan_summary(report, names)
    if report.argmax is not None:
        rect = report_rectangle(report, report.argmax)
        top = cond_corr_matrix(sample, rect)
        out["scan"]["argmax_matrix"] = top.matrix
    if args.perm:
        family = UpperTails(args.levels) if args.family == "tails" else BoundedGrid(args.levels)
        res = permutation_test(sample, family, args.perm, args.seed, args.m_min,
                               budget=args.budget)
        out["permutation"] = _perm_summary(res)
    if args.plot_data:
        _write_plot(args.plot_data, names, data, _argmax_mask(report, data))
    return out


def report_rectangle_full(d):
    from .moments import Rectangle

    return Rectangle.full(d)


def _ols(names, data):
    """Least squares with intercept through the normal equations."""
    X = data[:, :-1]
    y = data[:, -1]
    design = np.column_stack([np.ones(len(y)), X])
    labels = ["(intercept)"] + list(names[:-1])
    scale = np.abs(design).max(axis=0)
    scaled = design / np.where(scale > 0, scale, 1.0)
    rank = 0
    for k in range(design.shape[1]):
        r = np.linalg.matrix_rank(scaled[:, :k + 1])
        if r == rank:
            raise DataError(f"rank-deficient design: column '{labels[k]}' is collinear with "
                            f"{', '.join(repr(v) for v in labels[:k])}")
        rank = r
    gram = design.T @ design
    beta = np.linalg.solve(gram, design.T @ y)
    fitted = design @ beta
    return labels, beta, fitted, y - fitted


def cmd_residual_diag(args) -> dict:
    """Conditional correlation of residuals against fitted values.

    The last selected column is the response, the others are predictors.
    """
    _check_common(args)
    names, data, source = _load(args, 3)
    labels, beta, fitted, resid = _ols(names, data)
    y = data[:, -1]
    y_scale = max(float(np.std(y)), float(np.abs(y).max()), 1e-300)
    degenerate = float(np.std(resid)) <= ZERO_RESIDUAL_RTOL * y_scale
    if degenerate:
        resid = np.zeros_like(resid)
    g = conditional_correlation(moments_of(fitted, resid))
    out = _header("residual-diag", args)
    out["data"] = dict(source, rows=len(y), columns=list(names), response=names[-1])
    out["model"] = {
        "coefficients": {lab: b for lab, b in zip(labels, beta)},
        "global_cor_fitted_residual": g,
        "orthogonality_ok": abs(g) <= OLS_ORTHOGONALITY_TOL,
        "residual_sd": float(np.std(resid)),
        "zero_variance_residuals": degenerate,
    }
    pair_names = ["fitted", "residual"]
    if np.ptp(fitted) == 0:
        raise DataError("fitted values are constant; nothing to scan")
    upper = PairedSample(fitted, resid)
    lower = PairedSample(-fitted, resid)
    if upper.n < args.levels:
        raise DataError(f"need at least {args.levels} rows for {args.levels} levels")
    scans = {}
    for label, sample, family in (
        ("upper_tails", upper, UpperTails(args.levels)),
        ("lower_tails", lower, UpperTails(args.levels)),
        ("bounded", upper, BoundedGrid(args.levels)),
    ):
        report = scan(sample, family, args.m_min)
        summary = _scan_summary(report, pair_names)
        if label == "lower_tails" and summary["argmax"] is not None:
            # The scan ran on -fitted; restate threshold and signs on fitted.
            k = report.argmax
            t = -float(report.lower[k, 0])
            best = summary["argmax"]
            best["fitted"] = f"(-inf, {t:.12g}]"
            best["cov"] = -best["cov"]
            best["cor"] = -best["cor"]
        if args.perm:
            res = permutation_test(sample, family, args.perm, args.seed, args.m_min)
            summary["permutation"] = _perm_summary(res)
        scans[label] = summary
    out["scans"] = scans
    if args.plot_data:
        _write_plot(args.plot_data, pair_names, np.column_stack([fitted, resid]),
                    np.zeros(len(y), dtype=bool))
    return out


def cmd_generate(args) -> Optional[dict]:
    spec = _gen_spec(args)
    data = generate(spec)
    names = _gen_names(data.shape[1])
    if args.out is None:
        write_table(sys.stdout, names, data)
        return None
    try:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            write_table(fh, names, data)
    except OSError as exc:
        raise DataError(f"cannot write {args.out}: {exc.strerror}") from None
    return None


def cmd_oracle_check(args) -> dict:
    """Exact independence versus all-rectangle uncorrelation on discrete laws."""
    out = _header("oracle-check", args)
    if args.input is not None:
        names, data = read_table(args.input, _split_cols(args.cols))
        if data.shape[1] < 3:
            raise DataError("joint table needs coordinate columns followed by a probability column")
        try:
            joint = DiscreteJoint(data[:, :-1], data[:, -1])
        except ValueError as exc:
            raise DataError(f"{args.input}: {exc}") from None
        indep = oracle_is_independent(joint)
        worst = oracle_max_abs_cov(joint)
        out["joint"] = {"atoms": joint.points.shape[0], "dim": joint.dim,
                        "columns": list(names)}
        out["independent"] = indep
        out["max_abs_cond_cov"] = worst
        out["agree"] = indep == (worst <= INDEPENDENCE_TOL)
        return out
    if args.count < 1:
        raise ConfigError("--count must be >= 1")
    if args.seed < 0:
        raise ConfigError("--seed must be non-negative")
    rng = np.random.default_rng(args.seed)
    agree = independent = 0
    mismatches = []
    for k in range(args.count):
        joint = random_joint(rng)
        indep = oracle_is_independent(joint)
        uncorrelated = oracle_max_abs_cov(joint) <= INDEPENDENCE_TOL
        independent += indep
        if indep == uncorrelated:
            agree += 1
        else:
            mismatches.append(k)
    out["joints"] = args.count
    out["independent"] = independent
    out["agree"] = agree
    out["mismatches"] = mismatches
    return out


# -- parser --------------------------------------------------------------------------

def _add_source(p):
    p.add_argument("--input", metavar="PATH", help="CSV file with a header row")
    p.add_argument("--gen", choices=sorted(GENERATORS), help="built-in generator")
    p.add_argument("--n", type=int, default=1000, help="generator sample size")
    p.add_argument("--p", type=float, default=0.5, help="mixture-fp weight")
    p.add_argument("--dim", type=int, default=2, help="columns for indep-* generators")
    p.add_argument("--cols", help="comma-separated column names")


def _add_output(p):
    p.add_argument("--out", metavar="PATH", help="write the report here (default stdout)")
    p.add_argument("--format", choices=("text", "structured"), default="text")


def _add_stats(p, levels=12):
    p.add_argument("--levels", type=int, default=levels)
    p.add_argument("--m-min", dest="m_min", type=int, default=30)
    p.add_argument("--perm", type=int, default=0, help="permutation replicates (0 = none)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot-data", dest="plot_data", metavar="PATH",
                   help="write points plus an in-argmax flag as CSV")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="condscan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"condscan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("scan", help="bivariate rectangle scan")
    _add_source(p)
    _add_stats(p)
    p.add_argument("--family", choices=("bounded", "tails", "local"), default="bounded")
    p.add_argument("--eps", type=float)
    p.add_argument("--stride", type=float)
    _add_output(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("local-scan", help="small-window scan")
    _add_source(p)
    _add_stats(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--stride", type=float)
    _add_output(p)
    p.set_defaults(func=cmd_local_scan)

    p = sub.add_parser("mutual-scan", help="conditional correlation matrices, d >= 2")
    _add_source(p)
    _add_stats(p, levels=4)
    p.add_argument("--family", choices=("auto", "bounded", "tails"), default="auto")
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    _add_output(p)
    p.set_defaults(func=cmd_mutual_scan)

    p = sub.add_parser("residual-diag", help="scan residuals against fitted values")
    _add_source(p)
    _add_stats(p, levels=5)
    _add_output(p)
    p.set_defaults(func=cmd_residual_diag)

    p = sub.add_parser("generate", help="write a generator sample as CSV")
    p.add_argument("--gen", choices=sorted(GENERATORS), required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", metavar="PATH")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("oracle-check", help="exact check on discrete joint laws")
    p.add_argument("--input", metavar="PATH", help="CSV of atoms: coordinates then p")
    p.add_argument("--cols", help="comma-separated column names")
    p.add_argument("--count", type=int, default=1000, help="random joints when no --input")
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)
    p.set_defaults(func=cmd_oracle_check)
    return parser


def _emit(args, report):
    text = render(report, getattr(args, "format", "text"))
    if getattr(args, "out", None) is None:
        sys.stdout.write(text)
        return
    try:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"cannot write {args.out}: {exc.strerror}") from None


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        try:
            thread_count()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        report = args.func(args)
        if report is not None:
            _emit(args, report)
    except ConfigError as exc:
        print(f"condscan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"condscan: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"condscan: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
