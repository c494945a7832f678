"""Command-line front end.

Every computation and verification sweep is exposed as a subcommand with
machine-readable output: JSON reports (deterministic byte-for-byte for a
fixed seed, floats printed with 17 significant digits) or plot-ready CSV.

Exit codes: 0 success, 1 suite failures, 2 input error, 3 solver error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .checks import run_named_check
from .dynamics import (
    action_functional,
    constructive_geodesic,
    parse_scenario,
    solve_transport_with_source,
)
from .exact_ot import InvalidParameterError, UnequalMassError
from .flat_dual import flat_metric
from .genwass import GenWassParams, generalized_distance, partial_cost_curve
from .measures import MeasureError, canonical_json, parse_measure

EXIT_OK = 0
EXIT_SUITE_FAILURES = 1
EXIT_INPUT_ERROR = 2
EXIT_SOLVER_ERROR = 3

SUITES = ("metric", "duality", "flows", "gbb", "sah", "split", "kr")


def _load_measure(path: str):
    with open(path, "r", encoding="utf-8") as handle:
        return parse_measure(handle.read())


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _emit_doc(doc: dict, args):
    """JSON by default; ``--format csv`` flattens the recognizable series."""
    if getattr(args, "format", "json") == "csv":
        header, rows = _report_series(doc)
        buffer = io.StringIO()
        writer = csv.writer(buffer)
        writer.writerow(header)
        writer.writerows(rows)
        _emit(buffer.getvalue(), args.out)
    else:
        _emit(canonical_json(doc) + "\n", args.out)


def _cmd_dist(args) -> int:
    mu = _load_measure(args.mu)
    nu = _load_measure(args.nu)
    params = GenWassParams(args.a, args.b, args.p)
    solution = generalized_distance(mu, nu, params)
    doc = solution.to_json_dict()
    if args.curve:
        curve = partial_cost_curve(mu, nu, params.p)
        a, b, p = params.a, params.b, params.p
        total = mu.total_mass() + nu.total_mass()
        f_values = [
            a**p * (total - 2.0 * m) ** p + b**p * (m ** (p - 1.0) * r if m > 0 else 0.0)
            for m, r in zip(curve.masses, curve.costs)
        ]
        doc["curve"] = {
            "m": [float(m) for m in curve.masses],
            "rho": [float(r) for r in curve.costs],
            "f": f_values,
        }
    _emit_doc(doc, args)
    return EXIT_OK


def _cmd_flat(args) -> int:
    mu = _load_measure(args.mu)
    nu = _load_measure(args.nu)
    value, potential = flat_metric(mu, nu)
    primal = generalized_distance(mu, nu, GenWassParams(1.0, 1.0, 1.0))
    doc = {
        "flat": value,
        "potential": potential.to_json_dict(),
        "genwass_cross_check": primal.distance,
        "difference": abs(value - primal.distance),
    }
    _emit_doc(doc, args)
    return EXIT_OK


def _trajectory_doc(traj, extra: dict) -> dict:
    doc = {
        "times": [float(t) for t in traj.times],
        "masses": [float(m) for m in traj.mass_profile()],
        "defect": traj.defect,
        "source_tv": traj.source_tv,
    }
    doc.update(extra)
    return doc


def _write_trajectory_csv(traj, path: str):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        dim = traj.measures[0].dim
        writer.writerow(["t", "atom_id"] + [f"x{i}" for i in range(dim)] + ["w"])
        for row in traj.csv_rows():
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _cmd_geodesic(args) -> int:
    mu = _load_measure(args.mu)
    nu = _load_measure(args.nu)
    params = GenWassParams(args.a, args.b, 2.0)
    solution = generalized_distance(mu, nu, params)
    traj = constructive_geodesic(mu, nu, params, args.k, solution=solution)
    b_value = action_functional(traj, params)
    if args.csv:
        _write_trajectory_csv(traj, args.csv)
    doc = _trajectory_doc(
        traj, {"B": b_value, "T": solution.cost, "m_star": solution.m_star, "k": args.k}
    )
    _emit_doc(doc, args)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    with open(args.scenario, "r", encoding="utf-8") as handle:
        try:
            scenario = json.load(handle)
        except json.JSONDecodeError as exc:
            raise MeasureError(f"invalid scenario JSON: {exc}") from exc
    mu0, field, source = parse_scenario(scenario)
    grid = np.linspace(0.0, 1.0, args.grid)
    traj = solve_transport_with_source(mu0, field, source, grid)
    if args.csv:
        _write_trajectory_csv(traj, args.csv)
    extra = {}
    if traj.kinetic_ledger is not None:
        extra["B"] = action_functional(traj, GenWassParams(args.a, args.b, 2.0))
    _emit_doc(_trajectory_doc(traj, extra), args)
    return EXIT_OK


def _cmd_check(args) -> int:
    report = run_named_check(args.suite, seed=args.seed, n=args.n)
    _emit_doc(report, args)
    return EXIT_OK if report.get("ok") else EXIT_SUITE_FAILURES


def _report_series(report: dict):
    """Recognize the tabular series a report carries, in a stable order."""
    if "levels" in report and "D" in report:
        ratios = report.get("ratios", [])
        rows = []
        for idx, (k, d) in enumerate(zip(report["levels"], report["D"])):
            ratio = ratios[idx - 1] if 0 < idx <= len(ratios) else None
            rows.append((k, d, "" if ratio is None else ratio))
        return ["k", "D_k", "ratio"], rows
    if "curve" in report:
        curve = report["curve"]
        return ["m", "rho", "f"], list(zip(curve["m"], curve["rho"], curve["f"]))
    if "times" in report and "masses" in report:
        return ["t", "mass"], list(zip(report["times"], report["masses"]))
    return ["key", "value"], []


def _cmd_plotdata(args) -> int:
    with open(args.report, "r", encoding="utf-8") as handle:
        try:
            report = json.load(handle)
        except json.JSONDecodeError as exc:
            raise MeasureError(f"invalid report JSON: {exc}") from exc
    header, rows = _report_series(report)
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(header)
    writer.writerows(rows)
    _emit(buffer.getvalue(), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uot",
        description="Generalized Wasserstein distances, duality checks and dynamics",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, seed=False):
        p.add_argument("--out", default=None, help="write output to this path")
        p.add_argument("--format", default="json", choices=["json", "csv"])
        if seed:
            p.add_argument("--seed", type=int, default=0)
        p.add_argument("--params-json", default=None, help="JSON dict of extra parameters")

    p_dist = sub.add_parser("dist", help="generalized distance between two measure files")
    p_dist.add_argument("--mu", required=True)
    p_dist.add_argument("--nu", required=True)
    p_dist.add_argument("--a", type=float, default=1.0)
    p_dist.add_argument("--b", type=float, default=1.0)
    p_dist.add_argument("--p", type=float, default=1.0)
    p_dist.add_argument("--curve", action="store_true", help="include the cost curve")
    add_common(p_dist)
    p_dist.set_defaults(func=_cmd_dist)

    p_flat = sub.add_parser("flat", help="flat metric with duality cross-check")
    p_flat.add_argument("--mu", required=True)
    p_flat.add_argument("--nu", required=True)
    add_common(p_flat)
    p_flat.set_defaults(func=_cmd_flat)

    p_geo = sub.add_parser("geodesic", help="constructive near-minimizing trajectory")
    p_geo.add_argument("--mu", required=True)
    p_geo.add_argument("--nu", required=True)
    p_geo.add_argument("--a", type=float, default=1.0)
    p_geo.add_argument("--b", type=float, default=1.0)
    p_geo.add_argument("--k", type=int, default=6)
    p_geo.add_argument("--csv", default=None, help="write the trajectory table here")
    add_common(p_geo)
    p_geo.set_defaults(func=_cmd_geodesic)

    p_sim = sub.add_parser("simulate", help="solve the sourced transport equation")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--grid", type=int, default=17)
    p_sim.add_argument("--a", type=float, default=1.0)
    p_sim.add_argument("--b", type=float, default=1.0)
    p_sim.add_argument("--csv", default=None)
    add_common(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_check = sub.add_parser("check", help="run a verification suite")
    p_check.add_argument("suite", choices=SUITES)
    p_check.add_argument("--n", type=int, default=None)
    add_common(p_check, seed=True)
    p_check.set_defaults(func=_cmd_check)

    p_plot = sub.add_parser("plotdata", help="extract plot-ready CSV from a report")
    p_plot.add_argument("--report", required=True)
    add_common(p_plot)
    p_plot.set_defaults(func=_cmd_plotdata)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MeasureError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except (UnequalMassError, InvalidParameterError, ValueError, KeyError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
