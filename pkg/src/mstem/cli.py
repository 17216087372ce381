"""Command-line front end: ``mstem {detect, simulate, evaluate, theory}``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .detect import SCHEMA, DetectionResult, detect_mixture, detect_type1, detect_type2
from .evaluation import ScoringConfig, asymptotic_fdr_limit, score_replication, write_reports_csv
from .noise import SmoothingConfig, derivative_moments, expected_extrema_density, peak_distribution
from .signal import ChangePoint, PiecewiseLinearSignal, snr
from .simulation import SimulationConfig, build_signal, fdr_limit_for, parse_sweep, simulate, snr_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# -- input -----------------------------------------------------------------


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def ingest_csv(path) -> Tuple[np.ndarray, float]:
    """Read a series from a one- or two-column CSV.

    Two columns are ``time,value`` with consecutive integer times. A first
    row with a non-numeric field is taken as a header.

    Returns
    -------
    values : numpy.ndarray
    origin : float
        Time of the first sample (1 for a single-column file).

    Raises
    ------
    DataError
        Unreadable file, ragged or non-numeric rows, or a time column that
        is not unit spaced.
    """
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [(n, r) for n, r in enumerate(csv.reader(io.StringIO(text)), start=1) if r and any(f.strip() for f in r)]
    if rows and not all(_is_number(f) for f in rows[0][1]):
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0][1])
    if width not in (1, 2):
        raise DataError(f"{path}: expected 1 or 2 columns, found {width} on line {rows[0][0]}")
    parsed = []
    for n, r in rows:
        if len(r) != width:
            raise DataError(f"{path}: line {n} has {len(r)} fields, expected {width}")
        try:
            vals = [float(f) for f in r]
        except ValueError:
            raise DataError(f"{path}: line {n} is not numeric: {','.join(r)!r}") from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{path}: line {n} has a non-finite value")
        parsed.append(vals)
    arr = np.array(parsed)
    if width == 1:
        return arr[:, 0], 1.0
    t = arr[:, 0]
    steps = np.diff(t)
    bad = np.flatnonzero(steps != 1.0)
    if t[0] != round(t[0]) or bad.size:
        line = rows[int(bad[0]) + 1][0] if bad.size else rows[0][0]
        raise DataError(f"{path}: time column must be consecutive integers; first offending row is line {line}")
    return arr[:, 1], float(t[0])


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read JSON from {path}: {exc}") from exc


# -- output ----------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.integer):
        return int(x)
    return x


def _emit(doc: dict, output: Optional[str]) -> None:
    text = json.dumps(_jsonable({"schema": SCHEMA, **doc}), indent=2) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_csv(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text)


# -- commands --------------------------------------------------------------


def _smoothing(args, sigma0) -> SmoothingConfig:
    return SmoothingConfig(args.gamma, args.nu, args.c, sigma0)


def run_detect(args) -> dict:
    if not args.input:
        raise DataError("detect needs --input")
    y, origin = ingest_csv(args.input)
    sm = _smoothing(args, args.sigma0)
    if len(y) <= 2 * sm.half_width + 2:
        raise DataError(f"series of length {len(y)} is too short for gamma={args.gamma}, c={args.c}")
    if not 0 < args.alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {args.alpha}")
    baseline = args.baseline or "estimate"
    try:
        if args.mode == "type1":
            res = detect_type1(y, sm, args.alpha, origin=origin)
        elif args.mode == "type2":
            res = detect_type2(y, sm, args.alpha, baseline, origin=origin)
        else:
            res = detect_mixture(y, sm, None, args.alpha, baseline, origin=origin)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    doc = res.to_dict()
    doc.pop("schema")
    doc["config"] = {**doc["config"], "alpha": args.alpha, "input": str(args.input)}
    return doc


def _sim_config(args) -> SimulationConfig:
    return SimulationConfig(
        scenario=args.scenario,
        L=args.L,
        d=args.d,
        gamma=args.gamma,
        nu=args.nu,
        c=args.c,
        alpha=args.alpha,
        b=args.b,
        mode=args.mode,
        baseline=args.baseline,
        sigma0=args.sigma0 if args.sigma0 is not None else 1.0,
        known_sigma0=not args.estimate_sigma0,
        reps=args.reps,
        seed=args.seed,
        long_term=args.long_term,
    )


def run_simulate(args) -> dict:
    cfg = _sim_config(args)
    labels = cfg.scoring().interval_labels()
    if args.snr_sweep:
        points = snr_sweep(cfg, parse_sweep(args.snr_sweep), args.threads)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["snr", "metric", "value"])
        rows = []
        for p in points:
            s = p.summary
            for name, val in (("fdr", s.fdr), ("fdr_se", s.fdr_se), ("power", s.power), ("power_se", s.power_se), ("fdr_limit", p.fdr_limit)):
                w.writerow([repr(p.snr), name, repr(val)])
            rows.append({"snr": p.snr, "scale": p.scale, "fdr_limit": p.fdr_limit, **_summary(s, labels, args.timing)})
        _emit_csv(buf.getvalue(), args.csv)
        return {"command": "simulate", "config": cfg.to_dict(), "sweep": rows}
    res = simulate(cfg, args.threads)
    reports = res.reports
    if not args.timing:
        reports = [replace(r, runtime=0.0) for r in reports]
    _emit_csv(write_reports_csv(reports, labels), args.csv)
    doc = {
        "command": "simulate",
        "config": cfg.to_dict(),
        "summary": _summary(res.summary, labels, args.timing),
        "fdr_limit": fdr_limit_for(cfg),
    }
    if args.timing:
        doc["wall_time"] = res.wall_time
    return doc


def _summary(s, labels, timing: bool) -> dict:
    out = s.to_dict(labels)
    if not timing:
        out.pop("runtime")
    return out


def _truth_from_args(args) -> List[ChangePoint]:
    if args.truth:
        try:
            sig = PiecewiseLinearSignal.from_dict(_read_json(args.truth))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{args.truth}: not a signal description: {exc}") from exc
        return sig.change_points
    cfg = SimulationConfig(
        scenario=args.scenario, L=args.L, d=args.d, gamma=args.gamma, nu=args.nu, c=args.c, long_term=args.long_term
    )
    return build_signal(cfg)[1]


def run_evaluate(args) -> dict:
    if not args.input:
        raise DataError("evaluate needs --input (a detection JSON document)")
    data = _read_json(args.input)
    try:
        res = DetectionResult.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.input}: not a detection document: {exc}") from exc
    truth = _truth_from_args(args)
    scoring = ScoringConfig.for_gamma(args.gamma, args.b, not args.sign_blind)
    rep = score_replication(res, truth, scoring)
    out = rep.to_dict(scoring.interval_labels())
    out.pop("runtime")
    return {"command": "evaluate", "truth": [t.location for t in truth], "report": out}


def run_theory(args) -> dict:
    sm = _smoothing(args, args.sigma0 if args.sigma0 is not None else 1.0)
    mom = derivative_moments(sm)
    doc = {
        "command": "theory",
        "config": sm.to_dict(),
        "xi": sm.xi,
        "sigma": {str(k): math.sqrt(mom.variance(k)) for k in (1, 2, 3, 4)},
        "eta": {str(k): peak_distribution(sm, k).eta for k in (1, 2)},
        "extrema_density": {"1": expected_extrema_density(sm, 1), "2": expected_extrema_density(sm, 2)},
    }
    if args.dk is not None or args.jump is not None:
        dk = args.dk or 0.0
        a = args.jump or 0.0
        kl = args.slope_left
        cp = ChangePoint(0.0, a, kl, kl + dk)
        doc["snr"] = {"type": cp.kind.value, "slope_change": dk, "jump": a, "value": snr(cp, sm)}
    if args.A is not None:
        try:
            limits = {
                "TypeI": asymptotic_fdr_limit(sm, args.A, args.alpha, "TypeI"),
                "TypeII": asymptotic_fdr_limit(sm, args.A, args.alpha, "TypeII"),
                "mixture": asymptotic_fdr_limit(sm, (args.A / 2.0, args.A / 2.0), args.alpha, "mixture"),
            }
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        doc["fdr_limit"] = {"A": args.A, "alpha": args.alpha, **limits}
    return doc


# -- parser ----------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gamma", type=float, default=10.0, help="kernel bandwidth")
    p.add_argument("--nu", type=float, default=1.0, help="noise bandwidth")
    p.add_argument("--c", type=float, default=4.0, help="kernel truncation in units of gamma")
    p.add_argument("--alpha", type=float, default=0.05, help="BH level")
    p.add_argument("--sigma0", type=float, default=None, help="white-noise scale (detect: estimated if omitted)")
    p.add_argument("--output", help="write the JSON document here instead of stdout")


def _scenario_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", type=int, default=1, choices=(1, 2, 3, 4))
    p.add_argument("--L", type=int, default=None, help="series length (scenario default if omitted)")
    p.add_argument("--d", type=float, default=150.0, help="spacing of change points")
    p.add_argument("--b", type=float, default=10.0, help="location tolerance")
    p.add_argument("--long-term", action="store_true", help="ten times longer series")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mstem", description="Change-point detection in piecewise linear signals.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect change points in a CSV series")
    _common(p)
    p.add_argument("--input", help="CSV with a value column, or time,value")
    p.add_argument("--mode", choices=("type1", "type2", "mixture"), default="mixture")
    p.add_argument("--baseline", choices=("estimate", "zero"), default=None)

    p = sub.add_parser("simulate", help="Monte Carlo campaign on a test scenario")
    _common(p)
    _scenario_args(p)
    p.add_argument("--mode", choices=("type1", "type2", "mixture"), default=None)
    p.add_argument("--baseline", choices=("estimate", "zero"), default=None)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0, help="worker processes (0: all cores)")
    p.add_argument("--snr-sweep", metavar="lo:hi:steps", help="simulate over a grid of SNR values")
    p.add_argument("--estimate-sigma0", action="store_true", help="treat the noise scale as unknown")
    p.add_argument("--csv", help="per-replication rows, or tidy sweep rows, as CSV")
    p.add_argument("--timing", action="store_true", help="include run times (output is then not byte-stable)")

    p = sub.add_parser("evaluate", help="score a detection JSON against a known signal")
    _common(p)
    _scenario_args(p)
    p.add_argument("--input", help="detection JSON written by detect")
    p.add_argument("--truth", help="signal JSON; otherwise the scenario signal is used")
    p.add_argument("--sign-blind", action="store_true", help="ignore extremum sign when scoring power")

    p = sub.add_parser("theory", help="closed-form noise and limit quantities")
    _common(p)
    p.add_argument("--dk", type=float, default=None, help="slope change for the SNR query")
    p.add_argument("--jump", type=float, default=None, help="jump size for the SNR query")
    p.add_argument("--slope-left", type=float, default=0.0, help="slope left of the change point")
    p.add_argument("--A", type=float, default=None, help="change points per unit length")
    return parser


_COMMANDS = {"detect": run_detect, "simulate": run_simulate, "evaluate": run_evaluate, "theory": run_theory}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        doc = _COMMANDS[args.command](args)
        _emit(doc, args.output)
    except DataError as exc:
        print(f"mstem: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"mstem: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"mstem: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
