"""Command-line entry point: ``qnum solve | check-measure | export-curves | oracle``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from qnum import oracle as oracle_mod
from qnum.convexity import CURVE_COLUMNS, certify, measure_curves
from qnum.measures import DegenerateMeasureError, NonUniqueInflectionError, get_measure, register_measure, tabulated_measure
from qnum.network import ValidationError, load_scenario
from qnum.report import AllocationReport, fmt
from qnum.solver import SolverConfig, SolverError, SolveStatus, solve_scenario

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MAX_ITER = 2
EXIT_INVALID = 3

def _say(level: str, message: str):
    sys.stderr.write(f"{level}: {message}\n")


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load(args):
    scenario = load_scenario(args.scenario, strict=args.strict)
    if scenario.unknown_fields:
        _say("warning", f"{args.scenario}: ignoring unknown fields {', '.join(scenario.unknown_fields)}")
    return scenario


def _config(scenario, args) -> SolverConfig:
    overrides = {"tol": getattr(args, "tol", None), "seed": getattr(args, "seed", None)}
    try:
        return SolverConfig.from_mapping(scenario.solver, **overrides)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{args.scenario}: solver options: {exc}") from None


def cmd_solve(args) -> int:
    scenario = _load(args)
    cfg = _config(scenario, args)
    result = solve_scenario(scenario.network, None, cfg)
    report = AllocationReport.from_result(scenario.network, result, precision=args.precision)
    _emit(report.render(args.format), args.out)
    for w in result.boundary_warnings:
        _say("warning", w)
    return EXIT_MAX_ITER if result.status is SolveStatus.MAX_ITERATIONS else EXIT_OK


def _load_tabulated(measure_id: str, path: str):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    data = np.array([[float(a), float(b)] for a, b, *_ in rows])
    register_measure(tabulated_measure(measure_id, data[:, 0], data[:, 1]), replace=True)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def cmd_check_measure(args) -> int:
    if args.tabulated:
        _load_tabulated(args.measure, args.tabulated)
    m = get_measure(args.measure)
    cert = certify(m, args.grid)
    info = cert.to_dict()
    info["measure"] = m.id
    if args.json:
        sys.stdout.write(json.dumps(info, indent=2, default=float) + "\n")
        return EXIT_OK
    p = args.precision
    c2 = cert.cond2_report
    rows = [
        ("measure", m.id),
        ("zero threshold c", fmt(cert.zero_threshold, p)),
        ("inflection c1", "none" if cert.inflection is None else fmt(cert.inflection, p)),
        ("Cond. 1 (c >= 1/2)", "pass" if cert.cond1_pass else "fail"),
    ]
    if c2 is None:
        rows.append(("Cond. 2", "not applicable"))
    elif c2.vacuous:
        rows.append(("Cond. 2", "pass (ln f concave, vacuous)"))
    else:
        verdict = "pass" if c2.passed else "fail"
        rows.append(("Cond. 2", f"{verdict} (min g = {fmt(c2.min_g, p)} at u = {fmt(c2.argmin_u, p + 6)}, "
                                f"{c2.grid_points} points)"))
    if cert.restricted_cutoff is not None:
        rows.append(("restricted cutoff", fmt(cert.restricted_cutoff, p)))
    rows.append(("certificate", cert.cls.value))
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        sys.stdout.write(f"{k.ljust(width)}  {v}\n")
    for note in cert.notes:
        sys.stdout.write(f"note: {note}\n")
    return EXIT_OK


def cmd_export_curves(args) -> int:
    if args.tabulated:
        _load_tabulated(args.measure, args.tabulated)
    m = get_measure(args.measure)
    curves = measure_curves(m, args.grid)
    try:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CURVE_COLUMNS)
            for k in range(len(curves["u"])):
                writer.writerow(
                    "" if not np.isfinite(curves[c][k]) else repr(float(curves[c][k])) for c in CURVE_COLUMNS
                )
    except OSError as exc:
        _say("error", f"cannot write {args.out}: {exc.strerror}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_oracle(args) -> int:
    scenario = _load(args)
    net = scenario.network
    if net.n_routes > oracle_mod.MAX_ROUTES:
        raise oracle_mod.UnsupportedSizeError(
            f"oracle supports at most {oracle_mod.MAX_ROUTES} routes, scenario has {net.n_routes}"
        )
    cfg = _config(scenario, args)
    sol = solve_scenario(net, None, cfg)
    orc = oracle_mod.grid_search(net, None, oracle_mod.OracleConfig(args.grid))
    gap = sol.network_utility - orc.utility
    out = {
        "grid_points_per_dim": args.grid,
        "oracle": {"x": orc.x.tolist(), "utility": orc.utility},
        "solver": {"x": sol.x.tolist(), "utility": sol.network_utility, "status": sol.status.value},
        "gap": gap,
        "relative_gap": gap / sol.network_utility if sol.network_utility else float("nan"),
    }
    sys.stdout.write(json.dumps(out, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnum", description="Quantum network utility maximisation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="optimal rate/fidelity allocation for a scenario")
    p.add_argument("scenario")
    p.add_argument("--format", choices=("table", "csv", "json"), default="table")
    p.add_argument("--tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--precision", type=int, default=6)
    p.add_argument("--strict", action="store_true", help="reject unknown scenario fields")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check-measure", help="thresholds and convexity conditions of a measure")
    p.add_argument("measure")
    p.add_argument("--grid", type=int, default=100_000)
    p.add_argument("--json", action="store_true")
    p.add_argument("--precision", type=int, default=6)
    p.add_argument("--tabulated", metavar="CSV", help="register MEASURE from omega,f samples")
    p.set_defaults(func=cmd_check_measure)

    p = sub.add_parser("export-curves", help="write u,f,F,dF,d2F,g samples as CSV")
    p.add_argument("measure")
    p.add_argument("--out", required=True)
    p.add_argument("--grid", type=int, default=2001)
    p.add_argument("--tabulated", metavar="CSV", help="register MEASURE from omega,f samples")
    p.set_defaults(func=cmd_export_curves)

    p = sub.add_parser("oracle", help="compare the solver with a brute-force grid search")
    p.add_argument("scenario")
    p.add_argument("--grid", type=int, default=400)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, oracle_mod.UnsupportedSizeError, DegenerateMeasureError,
            NonUniqueInflectionError) as exc:
        _say("error", str(exc))
        return EXIT_INVALID
    except SolverError as exc:
        _say("error", f"solver failed: {exc}")
        return EXIT_FAILURE
    except OSError as exc:
        _say("error", f"{exc.filename}: {exc.strerror}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
