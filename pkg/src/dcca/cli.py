"""Command-line entry point: ``dcca {alpha,dcca,theory,simulate,mc,empirical}``.

Exit codes are 0 on success, 1 for unusable input data and 2 for usage or
configuration errors. The thread count is read from ``DCCA_THREADS``; it only
changes how work is scheduled, never the numbers written.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import io
import itertools
import json
import math
import os
import sys
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import theory
from .detrend import BoxGeometry, alpha_closed_form, alpha_coefficients, normalize_mode
from .errors import (
    DataError,
    DccaError,
    DegenerateVariance,
    DuplicateDate,
    EmptyIntersection,
    NonPositivePrice,
    NonSummable,
    ParseError,
)
from .estimator import FLAG_SHORT, SeriesPair, fluctuation_profile
from .montecarlo import McConfig, compare_modes, run_mc
from .simulate import SCENARIOS, ScenarioSpec, generate, theoretical_model

THREADS_ENV = "DCCA_THREADS"
PROFILE_FIELDS = ["m", "F2_1", "F2_2", "F_DCCA", "rho", "flag"]
LONG_FIELDS = ["scenario", "m", "statistic", "value"]


class UsageError(DccaError):
    """Bad command-line or configuration input (exit code 2)."""


def threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------- output

def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_rows(rows: Iterable[dict], fields: Sequence[str], fmt: str, out) -> None:
    """Write ``rows`` as CSV (header first) or as a JSON array of objects."""
    if fmt == "json":
        data = [{k: _json_value(r[k]) for k in fields} for r in rows]
        json.dump(data, out, indent=1, allow_nan=False)
        out.write("\n")
        return
    writer = csv.DictWriter(out, fieldnames=list(fields), lineterminator="\n", extrasaction="ignore")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: "" if r[k] is None else r[k] for k in fields})


def _emit(args, rows, fields):
    rows = list(rows)
    if args.out:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            write_rows(rows, fields, args.format, fh)
    else:
        write_rows(rows, fields, args.format, sys.stdout)


def _m_grid(args) -> list:
    if args.m_min > args.m_max:
        raise UsageError(f"--m-min {args.m_min} exceeds --m-max {args.m_max}")
    return list(range(args.m_min, args.m_max + 1))


# ---------------------------------------------------------------- parsing

def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if key == "q":
        return int(raw)
    if "," in raw:
        return [float(v) for v in raw.split(",") if v.strip()]
    return float(raw)


def parse_params(pairs: Iterable[str]) -> dict:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise UsageError(f"parameter {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        key = key.strip()
        try:
            out[key] = _parse_value(key, raw)
        except ValueError:
            raise UsageError(f"parameter {key}: cannot parse {raw.strip()!r}") from None
    return out


def _scenario(name, params, n, seed, trend1=None, trend2=None) -> ScenarioSpec:
    if name not in SCENARIOS:
        raise UsageError(f"unknown scenario {name!r}; valid presets: {', '.join(SCENARIOS)}")
    return ScenarioSpec(kind=name, n=n, seed=seed, params=params, trend1=trend1, trend2=trend2)


def _float_cell(text: str, row: int, col: int, source: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{source}: row {row}, column {col}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{source}: row {row}, column {col}: non-finite value {text!r}")
    return v


def _read_csv(path: str):
    """Header and data rows of a UTF-8 CSV file (``-`` reads standard input)."""
    if path == "-":
        text = sys.stdin.read()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8-sig")
        except OSError as exc:
            raise DataError(f"{path}: {exc.strerror}") from None
        except UnicodeDecodeError:
            raise ParseError(f"{path}: not valid UTF-8") from None
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        raise ParseError(f"{path}: empty file (a header row is required)")
    return rows[0], rows[1:]


def read_numeric_columns(path: str, columns: int) -> list:
    """The first ``columns`` columns of ``path`` as float arrays.

    Row numbers in error messages are file line numbers (header is row 1);
    columns are counted from 1.
    """
    header, body = _read_csv(path)
    if len(header) < columns:
        raise ParseError(f"{path}: expected at least {columns} column(s), header has {len(header)}")
    out = [[] for _ in range(columns)]
    for i, row in enumerate(body, start=2):
        if len(row) < columns:
            raise ParseError(f"{path}: row {i}: expected {columns} column(s), found {len(row)}")
        for c in range(columns):
            out[c].append(_float_cell(row[c].strip(), i, c + 1, path))
    return [np.array(col, dtype=np.float64) for col in out]


def read_prices(path: str, price_column: str = None):
    """``(dates, prices)`` of one asset file, dates strictly increasing."""
    header, body = _read_csv(path)
    names = [h.strip() for h in header]
    if len(names) < 2:
        raise ParseError(f"{path}: need a date column and a price column")
    if price_column is not None:
        if price_column not in names:
            raise ParseError(f"{path}: no column named {price_column!r} (have {names})")
        pc = names.index(price_column)
    else:
        lowered = [n.lower().replace(" ", "_") for n in names]
        pc = lowered.index("adj_close") if "adj_close" in lowered else 1
    dates, prices = [], []
    for i, row in enumerate(body, start=2):
        if len(row) <= pc:
            raise ParseError(f"{path}: row {i}: missing price column {pc + 1}")
        try:
            d = dt.date.fromisoformat(row[0].strip())
        except ValueError:
            raise ParseError(f"{path}: row {i}, column 1: not an ISO-8601 date: {row[0]!r}") from None
        p = _float_cell(row[pc].strip(), i, pc + 1, path)
        if p <= 0:
            raise NonPositivePrice(f"{path}: row {i}: price {p!r} is not positive (log undefined)")
        if dates and d <= dates[-1]:
            kind = "duplicate" if d == dates[-1] else "out-of-order"
            raise DuplicateDate(f"{path}: row {i}: {kind} date {d.isoformat()}")
        dates.append(d)
        prices.append(p)
    if not dates:
        raise ParseError(f"{path}: no data rows")
    return dates, np.array(prices)


def align_prices(tables: dict) -> tuple:
    """Inner join on dates: ``(shared_dates, {name: prices})``."""
    shared = None
    for dates, _ in tables.values():
        shared = set(dates) if shared is None else shared & set(dates)
    if not shared:
        raise EmptyIntersection("the input files share no dates")
    shared = sorted(shared)
    aligned = {}
    for name, (dates, prices) in tables.items():
        pos = {d: i for i, d in enumerate(dates)}
        aligned[name] = prices[[pos[d] for d in shared]]
    return shared, aligned


def log_returns(prices: np.ndarray, transform: str = "log_return") -> np.ndarray:
    """``ln p_t - ln p_{t-1}``; ``abs_log_return`` takes absolute values."""
    r = np.diff(np.log(prices))
    if transform == "abs_log_return":
        return np.abs(r)
    if transform != "log_return":
        raise UsageError(f"unknown transform {transform!r}")
    return r


# ---------------------------------------------------------------- commands

def cmd_alpha(args):
    nu = args.nu
    if args.closed_form and nu != 0:
        alpha_closed_form(args.m_min, 0, nu)  # raises UnsupportedOrder
    rows = []
    for m in _m_grid(args):
        brute = alpha_coefficients(m, nu, "bruteforce")
        use_closed = nu == 0
        coef = alpha_coefficients(m, nu, "closed") if use_closed else brute
        scale = abs(brute.alpha[0])
        for j in range(m + 1):
            a = float(coef.alpha[j])
            ok = abs(a - float(brute.alpha[j])) <= 1e-9 * scale
            rows.append({"m": m, "j": j, "alpha": a, "beta": float(coef.beta[j]),
                         "method": "closed" if use_closed else "bruteforce",
                         "crosscheck": "ok" if ok else "mismatch"})
    _emit(args, rows, ["m", "j", "alpha", "beta", "method", "crosscheck"])
    return 0


def profile_rows(pair: SeriesPair, m_grid, nu, mode, workers=1) -> list:
    """One row per ``m``; box sizes that do not fit are flagged, not fatal."""
    mode = normalize_mode(mode)
    fitting = []
    for m in m_grid:
        g = BoxGeometry(m, nu, mode)
        if g.n_boxes(pair.n) >= 1:
            fitting.append(m)
    computed = {}
    if fitting:
        prof = fluctuation_profile(pair, fitting, nu, mode, workers=workers)
        computed = {r["m"]: r for r in prof.rows()}
    nan = float("nan")
    return [
        computed.get(m, {"m": m, "F2_1": nan, "F2_2": nan, "F_DCCA": nan, "rho": nan, "flag": FLAG_SHORT})
        for m in m_grid
    ]


def cmd_dcca(args):
    if len(args.inputs) == 1:
        x1, x2 = read_numeric_columns(args.inputs[0], 2)
    elif len(args.inputs) == 2:
        (x1,), (x2,) = (read_numeric_columns(p, 1) for p in args.inputs)
    else:
        raise UsageError("dcca takes one two-column file or two one-column files")
    if x1.size != x2.size:
        raise DataError(f"columns differ in length: {x1.size} != {x2.size}")
    if x1.size == 0:
        raise DataError("input has no data rows")
    rows = profile_rows(SeriesPair(x1, x2), _m_grid(args), args.nu, args.mode, threads())
    _emit(args, rows, PROFILE_FIELDS)
    return 0


def _long(scenario, m, statistic, value):
    return {"scenario": scenario, "m": m, "statistic": statistic, "value": value}


def cmd_theory(args):
    spec = _scenario(args.scenario, parse_params(args.param), 1, 0)
    lin = theoretical_model(spec)
    model = theory.linear_process_cov(lin)
    rows = []
    for m in _m_grid(args):
        g = BoxGeometry(m, args.nu)
        rows.append(_long(spec.kind, m, "E_F2_1", theory.expected_dfa(model, g, 1)))
        rows.append(_long(spec.kind, m, "E_F2_2", theory.expected_dfa(model, g, 2)))
        rows.append(_long(spec.kind, m, "E_F_DCCA", theory.expected_dcca(model, g)))
        try:
            rho = theory.rho_eps(model, g)
        except DegenerateVariance:
            rho = float("nan")
        rows.append(_long(spec.kind, m, "rho_eps", rho))
        for h in args.lags:
            for which in ("dfa1", "dfa2", "dcca"):
                cov = theory.fluctuation_covariance(model, g, h, which, workers=threads())
                rows.append(_long(spec.kind, m, f"cov_{which}_h{h}", cov))
    if args.nu == 0:
        limits = {"rho_limit": lambda: theory.rho_limit(lin),
                  "slope_1": lambda: theory.asymptotic_expectation_slope(model, 1),
                  "slope_2": lambda: theory.asymptotic_expectation_slope(model, 2),
                  "slope_12": lambda: theory.asymptotic_expectation_slope(model, 12)}
        for name, fn in limits.items():
            try:
                value = fn()
            except (DegenerateVariance, NonSummable):
                value = float("nan")
            rows.append(_long(spec.kind, None, name, value))
    _emit(args, rows, LONG_FIELDS)
    return 0


def _trend(raw):
    if raw is None:
        return None
    try:
        return [float(v) for v in raw.split(",")]
    except ValueError:
        raise UsageError(f"trend must be comma-separated numbers, got {raw!r}") from None


def cmd_simulate(args):
    spec = _scenario(args.scenario, parse_params(args.param), args.n, args.seed,
                     _trend(args.trend1), _trend(args.trend2))
    pair = generate(spec)
    rows = ({"t": t + 1, "x1": float(a), "x2": float(b)} for t, (a, b) in enumerate(zip(pair.x1, pair.x2)))
    _emit(args, rows, ["t", "x1", "x2"])
    return 0


def load_mc_config(path: str, workers: int = 1) -> tuple:
    """Read an INI config: ``[mc]`` settings and an optional ``[params]`` section.

    Returns ``(McConfig, compare)`` where ``compare`` asks for both overlap modes.
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    if "mc" not in parser:
        raise UsageError(f"{path}: missing [mc] section")
    sec = parser["mc"]
    known = {"scenario", "reps", "n", "seed", "m_min", "m_max", "nu", "mode", "compare_modes", "trend1", "trend2"}
    unknown = set(sec) - known
    if unknown:
        raise UsageError(f"{path}: unknown [mc] keys {sorted(unknown)}")
    if "scenario" not in sec:
        raise UsageError(f"{path}: [mc] needs a scenario")
    params = parse_params(f"{k}={v}" for k, v in parser["params"].items()) if "params" in parser else {}
    try:
        spec = _scenario(sec["scenario"], params, sec.getint("n", 2000), sec.getint("seed", 0),
                         _trend(sec.get("trend1")), _trend(sec.get("trend2")))
        grid = range(sec.getint("m_min", 3), sec.getint("m_max", 100) + 1)
        cfg = McConfig(scenario=spec, reps=sec.getint("reps", 300), m_grid=grid,
                       nu=sec.getint("nu", 0), mode=sec.get("mode", "overlapping"), workers=workers)
        compare = sec.getboolean("compare_modes", False)
    except ValueError as exc:
        if isinstance(exc, DccaError):
            raise
        raise UsageError(f"{path}: {exc}") from None
    return cfg, compare


def cmd_mc(args):
    cfg, compare = load_mc_config(args.config, threads())
    summaries = compare_modes(cfg) if compare else (run_mc(cfg),)
    rows = []
    for s in summaries:
        label = f"{s.scenario}[{s.mode}]" if compare else s.scenario
        rows.extend(_long(label, m, stat, v) for _, m, stat, v in s.long_rows())
    _emit(args, rows, LONG_FIELDS)
    return 0


def cmd_empirical(args):
    if len(args.files) < 2:
        raise UsageError("empirical needs at least two price files")
    tables = {}
    for path in args.files:
        name = Path(path).stem
        if name in tables:
            raise UsageError(f"two inputs share the asset name {name!r}")
        tables[name] = read_prices(path, args.price_column)
    dates, aligned = align_prices(tables)
    returns = {k: log_returns(v, args.transform) for k, v in aligned.items()}
    if len(dates) < 2:
        raise DataError("fewer than two shared dates; no returns can be formed")
    names = list(tables)
    pairs = itertools.permutations(names, 2) if args.both_orders else itertools.combinations(names, 2)
    rows = []
    grid = _m_grid(args)
    for a, b in pairs:
        for r in profile_rows(SeriesPair(returns[a], returns[b]), grid, args.nu, args.mode, threads()):
            rows.append({"asset_1": a, "asset_2": b, "n_returns": len(dates) - 1, **r})
    _emit(args, rows, ["asset_1", "asset_2", "n_returns", *PROFILE_FIELDS])
    return 0


# ---------------------------------------------------------------- parser

def _common(p, m_max=100):
    p.add_argument("--m-min", type=int, default=3)
    p.add_argument("--m-max", type=int, default=m_max)
    p.add_argument("--nu", type=int, default=0)
    p.add_argument("--mode", choices=["overlap", "nonoverlap"], default="overlap")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (default: standard output)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcca", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("alpha", help="alpha_j and beta_j weights of K")
    _common(p, m_max=10)
    p.add_argument("--closed-form", action="store_true", help="require the closed form (nu=0 only)")
    p.set_defaults(func=cmd_alpha)

    p = sub.add_parser("dcca", help="fluctuation profile of two series")
    _common(p)
    p.add_argument("inputs", nargs="+", help="one two-column CSV or two one-column CSVs ('-' is stdin)")
    p.set_defaults(func=cmd_dcca)

    p = sub.add_parser("theory", help="population expectations, covariances and limits")
    _common(p)
    p.add_argument("--scenario", required=True)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--lags", type=int, nargs="*", default=[], help="box lags h for covariances")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("simulate", help="draw one sample pair")
    _common(p)
    p.add_argument("--scenario", required=True)
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--trend1", help="polynomial coefficients, increasing degree")
    p.add_argument("--trend2")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc", help="Monte Carlo sweep from an INI config")
    _common(p)
    p.add_argument("config")
    p.set_defaults(func=cmd_mc)

    p = sub.add_parser("empirical", help="pairwise profiles of aligned price files")
    _common(p)
    p.add_argument("files", nargs="+")
    p.add_argument("--transform", choices=["log_return", "abs_log_return"], default="log_return")
    p.add_argument("--price-column", help="price column name (default: adj_close or the second column)")
    p.add_argument("--both-orders", action="store_true", help="emit (A,B) and (B,A)")
    p.set_defaults(func=cmd_empirical)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"dcca {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (DccaError, ValueError) as exc:
        print(f"dcca {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
