"""Command-line entry point.

    invariant-ma solve   --config C [--out DIR] [--seed N] [--tol X]
    invariant-ma epsilon GROUP [--samples N]
    invariant-ma verify  SOLUTION --config C [--tol X] [--seed N]
    invariant-ma oracle  --config C [--out DIR]

Exit codes: 0 converged (or check passed), 1 config/parse/input error,
2 hypothesis violation, 3 budget exhausted (or residual above threshold).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .config import ConfigError, RunConfig
from .densities import check_infinite_mass, validate_density
from .diagnostics import equivariance_check, properness_check, run_diagnostics, strict_convexity_probe
from .exhaustion import ExhaustionResult, cauchy_extract, run_exhaustion, uniform_bound_monitor
from .groups import GroupDescriptorError, check_irreducible, parse_group
from .measure import weak_residual_report
from .pl import MalformedSolution, PLConvexFunction, ball_grid
from .radial import InversionFailure, residual_check, solve_radial

RUN_TAG = "invariant-ma/run-1"
EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION, EXIT_BUDGET = 0, 1, 2, 3
_STATUS_EXIT = {"converged": EXIT_OK, "hypothesis-violation": EXIT_VIOLATION, "budget-exhausted": EXIT_BUDGET}

log = logging.getLogger("invariant_ma")


def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays become Python values, NaN/inf become None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load_config(path) -> RunConfig:
    return config_mod.load(path)


# ---------------------------------------------------------------------------
# solve

def check_hypotheses(cfg: RunConfig) -> tuple[dict, list[str], list[str]]:
    """Irreducibility, nonnegativity, local boundedness and mass divergence.

    Returns (summary, errors, warnings); errors abort the run.
    """
    errors, warnings = [], []
    group = cfg.group_spec()
    cert = check_irreducible(group)
    summary = {"epsilon": cert.epsilon, "span_rank": cert.span_rank,
               "center_of_mass_norm": cert.center_of_mass_norm, "irreducible": cert.verdict}
    if not cert.verdict:
        errors.append(f"irreducibility check failed, ε={cert.epsilon:g}")
    if not group.is_finite:
        errors.append("the exhaustion solver needs a finite group; use the oracle subcommand for full rotations")
    f, g = cfg.f_density(), cfg.g_density()
    sched = cfg.exhaustion_schedule()
    radius = float(max(sched.k_values))
    for name, d in (("f", f), ("g", g)):
        problems = validate_density(d, radius)
        summary[f"{name}_checks"] = problems or ["ok"]
        errors.extend(f"{name}: {p}" for p in problems)
    if not errors:
        diag = check_infinite_mass(f, [2.0 ** j for j in range(6)])
        summary["f_mass"] = {"verdict": diag.verdict, "radii": diag.radii, "masses": diag.masses}
        if diag.verdict == "SUSPECT-FINITE":
            warnings.append("f mass looks finite (SUSPECT-FINITE); the slopes may blow up")
    return summary, errors, warnings


def _oracle_error(cfg: RunConfig, phi: PLConvexFunction) -> dict | None:
    f, g = cfg.f_density(), cfg.g_density()
    if not (f.is_radial and g.is_radial):
        return None
    R = cfg.eval_radius
    try:
        sol = solve_radial(f, g, R, steps=1000)
    except InversionFailure as exc:
        return {"available": False, "reason": str(exc)}
    grid = cfg.exhaustion_schedule().eval_grid(cfg.n)
    return {"available": True, "radius": R, "sup_error": float(np.abs(phi(grid) - sol(grid)).max())}


def _write_exhaustion_tables(out: Path, result: ExhaustionResult, grid) -> list[str]:
    cols = ["k", "R_k", "targets", "iterations", "mass_residual", "monotone", "sup_norm", "max_slope", "sup_diff"]
    write_csv(out / "exhaustion.csv", cols, ([r.row()[c] for c in cols] for r in result.records))
    write_csv(out / "traces.csv", ["k", "iteration", "objective", "residual"],
              ((r.k, i, float(o), float(res)) for r in result.records
               for i, (o, res) in enumerate(zip(r.trace.objective, r.trace.residuals))))
    tables = ["exhaustion.csv", "traces.csv"]
    if len(result.records) >= 2:
        _, mat = cauchy_extract(result.phis, grid, 0.0)
        ks = [r.k for r in result.records]
        write_csv(out / "cauchy.csv", ["k"] + [f"k={k}" for k in ks], ([k] + list(row) for k, row in zip(ks, mat)))
        tables.append("cauchy.csv")
    return tables


def cmd_solve(args) -> int:
    try:
        cfg = _load_config(args.config)
        if args.seed is not None:
            cfg.seed = int(args.seed)
        if args.out is not None:
            cfg.output_dir = str(args.out)
        tol = float(args.tol) if args.tol is not None else cfg.tolerance("cauchy")
        hyp, errors, warnings = check_hypotheses(cfg)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    if errors:
        for e in errors:
            _err(e)
        return EXIT_CONFIG
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps())
    f, g, group = cfg.f_density(), cfg.g_density(), cfg.group_spec()
    sched = cfg.exhaustion_schedule()
    result = run_exhaustion(f, g, group, sched, tol=tol, out_dir=out, check_group=False)
    result.phi.save(out / "solution.json")
    grid = sched.eval_grid(cfg.n)
    tables = _write_exhaustion_tables(out, result, grid)
    bounds = uniform_bound_monitor(result.records, sched.eval_radius, hyp["epsilon"], sched.growth_window,
                                   sched.growth_factor)
    report = {"format": RUN_TAG, "status": result.status, "exit_code": _STATUS_EXIT[result.status],
              "message": result.message, "hypotheses": hyp, "warnings": warnings, "cauchy_tol": tol,
              "exhaustion": [{k: v for k, v in r.row().items() if k != "seconds"} for r in result.records],
              "bounds": {"monotone_slopes": bool(np.all(np.diff(bounds.max_slopes) > 0)),
                         "growing": bounds.doubling, "stabilizing": bounds.stabilizing,
                         "narrative": bounds.narrative},
              "solution": "solution.json",
              "iterates": [f"phi_k{r.k}.json" for r in result.records]}
    if result.status != "hypothesis-violation":
        rep = weak_residual_report(result.phi, f, g, cfg.sets())
        write_csv(out / "residuals.csv", ["set", "lhs", "omega", "quadrature_error", "relative_residual"],
                  ([row[c] for c in ("set", "lhs", "omega", "quadrature_error", "relative_residual")]
                   for row in rep.table()))
        tables.append("residuals.csv")
        report["weak_residual"] = {"max": rep.max_residual, "threshold": cfg.tolerance("weak_residual"),
                                   "rows": rep.table()}
        report["oracle"] = _oracle_error(cfg, result.phi)
        diag = run_diagnostics(result.phi, f, g, group, radius=sched.eval_radius, seed=cfg.seed, flat_tol=tol)
        report["diagnostics"] = diag.to_dict()
        write_csv(out / "properness.csv", ["r", "min_on_sphere"],
                  ((row["r"], row["min_on_sphere"]) for row in diag.properness.table()))
        tables.append("properness.csv")
        if diag.holder is not None and diag.holder.points is not None:
            write_csv(out / "holder.csv", ["log_sep", "log_grad_diff"], diag.holder.points)
            tables.append("holder.csv")
    report["tables"] = tables
    write_json(out / "report.json", report)
    print(f"status: {result.status}")
    print(result.message)
    if result.status == "hypothesis-violation":
        print("k, max_slope, sup_norm")
        for r in result.records:
            print(f"{r.k:g}, {r.max_slope:.6g}, {r.sup_norm:.6g}")
    elif report.get("oracle") and report["oracle"].get("available"):
        print(f"sup error vs radial reference on B_{sched.eval_radius:g}: {report['oracle']['sup_error']:.4g}")
    return _STATUS_EXIT[result.status]


# ---------------------------------------------------------------------------
# epsilon

def cmd_epsilon(args) -> int:
    desc = args.group
    try:
        if desc is None:
            if args.config is None:
                _err("give a group descriptor or --config")
                return EXIT_CONFIG
            desc = _load_config(args.config).group
        elif desc.lstrip().startswith("{"):
            desc = json.loads(desc)
        group = parse_group(desc)
    except (GroupDescriptorError, ConfigError, json.JSONDecodeError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    samples = args.samples if args.samples is not None else 4096
    cert = check_irreducible(group, sphere_samples=samples)
    print(f"group: {group.name or desc} (order {group.order if group.is_finite else 'inf'})")
    print(f"epsilon: {cert.epsilon:.12g}")
    print(f"span rank: {cert.span_rank}")
    print(f"center of mass norm: {cert.center_of_mass_norm:.3g}")
    print(f"verdict: {'irreducible' if cert.verdict else 'reducible'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify

def cmd_verify(args) -> int:
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        phi = PLConvexFunction.load(args.solution)
    except (OSError, MalformedSolution) as exc:
        _err(f"malformed solution file: {exc}")
        return EXIT_CONFIG
    if phi.n != cfg.n:
        _err(f"malformed solution file: dimension {phi.n} does not match n = {cfg.n}")
        return EXIT_CONFIG
    seed = cfg.seed if args.seed is None else int(args.seed)
    threshold = float(args.tol) if args.tol is not None else cfg.tolerance("weak_residual")
    f, g = cfg.f_density(), cfg.g_density()
    rep = weak_residual_report(phi, f, g, cfg.sets())
    print(f"{'set':<32} {'lhs':>12} {'omega':>12} {'quad err':>10} {'residual':>10}")
    for row in rep.table():
        print(f"{row['set']:<32} {row['lhs']:12.6g} {row['omega']:12.6g} {row['quadrature_error']:10.3g} "
              f"{row['relative_residual']:10.3g}")
    R = cfg.eval_radius
    prop = properness_check(phi, [R * j / 4 for j in range(1, 5)], flat_tol=cfg.tolerance("cauchy"))
    sc = strict_convexity_probe(phi, radius=R, seed=seed)
    print(f"properness: {prop.verdict}")
    print(f"strict convexity gap (length >= {sc.min_length:g}): {sc.min_gap:.3g}")
    group = cfg.group_spec()
    if group.is_finite:
        eq = equivariance_check(phi, group, ball_grid(R, 41, cfg.n))
        print(f"equivariance violation: {eq.value_violation:.3g}")
    ok = rep.max_residual <= threshold
    print(f"max residual {rep.max_residual:.4g} {'<=' if ok else '>'} threshold {threshold:g}")
    return EXIT_OK if ok else EXIT_BUDGET


# ---------------------------------------------------------------------------
# oracle

def cmd_oracle(args) -> int:
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    f, g = cfg.f_density(), cfg.g_density()
    if not (f.is_radial and g.is_radial):
        _err("the oracle needs radial f and g")
        return EXIT_CONFIG
    r_max = float(cfg.oracle_option("r_max"))
    try:
        sol = solve_radial(f, g, r_max, steps=int(cfg.oracle_option("steps")))
    except InversionFailure as exc:
        _err(f"InversionFailure: {exc}")
        return EXIT_CONFIG
    out = Path(args.out if args.out is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.dumps())
    sol.write_table(out / "oracle.csv")
    pl = sol.to_pl(float(cfg.oracle_option("pl_radius")), int(cfg.oracle_option("pl_resolution")))
    pl.save(out / "oracle_solution.json")
    h = sol.step
    radii = np.linspace(max(0.05 * r_max, 2 * h), r_max - 2 * h, 19)
    res = residual_check(sol, f, g, radii)
    write_json(out / "oracle_report.json", {"format": RUN_TAG, "r_max": r_max, "steps": len(sol.r) - 1,
                                            "residual": res, "residual_radii": radii,
                                            "pl_pieces": len(pl), "tables": ["oracle.csv"],
                                            "solution": "oracle_solution.json"})
    print(f"radial solution on [0, {r_max:g}] written to {out / 'oracle.csv'}")
    print(f"equation residual: {res:.3g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="invariant-ma", description="Group-invariant entire Monge-Ampere solutions.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run the exhaustion solver")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="run directory (overrides output_dir)")
    s.add_argument("--seed", type=int, help="seed for diagnostic probes")
    s.add_argument("--tol", type=float, help="Cauchy tolerance on successive iterates")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("epsilon", help="orbit-hull inradius epsilon of a group")
    e.add_argument("group", nargs="?", help='preset such as "cyclic:8", or a JSON matrices mapping')
    e.add_argument("--config", help="take the group from a config instead")
    e.add_argument("--samples", type=int, help="unit vectors scanned (default 4096)")
    e.set_defaults(func=cmd_epsilon)

    v = sub.add_parser("verify", help="weak residual and diagnostics of a solution file")
    v.add_argument("solution")
    v.add_argument("--config", required=True)
    v.add_argument("--tol", type=float, help="residual threshold (overrides tolerances.weak_residual)")
    v.add_argument("--seed", type=int)
    v.set_defaults(func=cmd_verify)

    o = sub.add_parser("oracle", help="radial reference solution")
    o.add_argument("--config", required=True)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
