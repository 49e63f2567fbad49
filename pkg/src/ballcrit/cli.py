"""Command-line driver: deterministic runs, sweeps and report emission.

Commands: eigen, lambda-star, solve, pipeline, sweep, certify,
check-hypotheses, refine.  Exit codes: 0 success, 2 configuration or
validation error, 3 solver non-convergence, 4 geometry violation,
5 unknown command, 6 unreadable vector file.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .dc import beta_sup, certify, discrete_constants
from .grid import eigen_analytic
from .hypotheses import WitnessCache, params_for, run_all_checks
from .report import (
    build_solve_report,
    certificate_dict,
    export_solution_csv,
    export_solution_xyz_csv,
    pipeline_dict,
    point_dict,
    read_vector_csv,
    refinement_dict,
    write_trace_csv,
)
from .solvers import (
    SolverOptions,
    TraceRecorder,
    ball_minimize,
    three_point_pipeline,
)

COMMANDS = (
    "eigen",
    "lambda-star",
    "solve",
    "pipeline",
    "sweep",
    "certify",
    "check-hypotheses",
    "refine",
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_GEOMETRY = 4
EXIT_UNKNOWN_COMMAND = 5
EXIT_VECTOR_FILE = 6


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def derived_seed(master: int, index: int) -> int:
    """Per-lambda seed for sweeps; reproducible as a single run via --seed."""
    return (master * 1_000_003 + 7_919 * index + 12_345) % (2**31)


def _solver_for_seed(cfg: RunConfig, seed: int) -> SolverOptions:
    opts = replace(cfg.solver)
    opts.seed = seed
    return opts


def _runs_exit_code(runs: list[dict]) -> int:
    geometry = False
    nonconverged = False
    for run in runs:
        for st in run.get("stages", []):
            if st["ok"]:
                continue
            if st["name"] == "geometry" or "geometry violated" in st["detail"]:
                geometry = True
            else:
                nonconverged = True
        for ptd in run.get("points", []):
            if not ptd["converged"]:
                nonconverged = True
    if geometry:
        return EXIT_GEOMETRY
    if nonconverged:
        return EXIT_NONCONVERGED
    return EXIT_OK


def _resolve_lambdas(cfg: RunConfig) -> list[float]:
    if cfg.lambda_mode != "auto":
        return cfg.lambdas()
    p = cfg.build_problem(1.0)  # lambda placeholder; only the operator matters
    constants = discrete_constants(p.operator, cfg.rho)
    result = beta_sup(p.shape, p.nonlinearity, constants, seed=cfg.solver.seed)
    if not np.isfinite(result.lam_star):
        raise ConfigError("problem.fraction", "cannot scale lambda*: beta = 0 makes it unbounded")
    return [cfg.fraction * result.lam_star]


def _run_single(cfg: RunConfig, lam: float, seed: int, trace: TraceRecorder | None):
    p = cfg.build_problem(lam)
    constants = discrete_constants(p.operator, cfg.rho)
    opts = _solver_for_seed(cfg, seed)
    result = three_point_pipeline(p, constants, opts, trace=trace)
    return p, result


def _export_points(cfg: RunConfig, run_index: int, p, result) -> None:
    if not cfg.csv_dir:
        return
    os.makedirs(cfg.csv_dir, exist_ok=True)
    for cp in result.points:
        path = os.path.join(cfg.csv_dir, f"point_run{run_index:03d}_{cp.kind}.csv")
        if cfg.mode == "domain":
            export_solution_xyz_csv(p.shape, cp.point.values, cfg.h, path)
        else:
            export_solution_csv(p.shape, cp.point.values, path)


def _hypothesis_verdicts(cfg: RunConfig):
    params = cfg.hypotheses or params_for(cfg.nonlinearity(), cfg.rho)
    if params is None:
        return None
    nl = cfg.nonlinearity()
    shape = cfg.build_problem(1.0).shape
    sites = [(1, 1)] if not nl.site_dependent else list(shape.sites())
    return run_all_checks(nl, params, sites, WitnessCache())


def cmd_eigen(cfg: RunConfig, quiet: bool) -> int:
    p = cfg.build_problem(1.0)
    vals = eigen_analytic(p.shape, p.operator.scale)
    print(" ".join(_fmt(v) for v in vals))
    return EXIT_OK


def cmd_lambda_star(cfg: RunConfig, quiet: bool) -> int:
    p = cfg.build_problem(1.0)
    constants = discrete_constants(p.operator, cfg.rho)
    result = beta_sup(p.shape, p.nonlinearity, constants, seed=cfg.solver.seed)
    star = "inf" if not np.isfinite(result.lam_star) else _fmt(result.lam_star)
    print(f"beta = {_fmt(result.beta)}  lambda_star = {star}  method = {result.method}")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, quiet: bool) -> int:
    t0 = time.perf_counter()
    lam = _resolve_lambdas(cfg)[0]
    p = cfg.build_problem(lam)
    constants = discrete_constants(p.operator, cfg.rho)
    opts = _solver_for_seed(cfg, cfg.solver.seed)
    trace = TraceRecorder() if cfg.trace_path else None
    cp = ball_minimize(p, cfg.rho, opts, trace=trace)
    cp.certificate = certify(p, cp.point.values, rho=cfg.rho)
    run = {
        "lambda": lam,
        "seed": opts.seed,
        "points": [point_dict(cp, p.energy_origin())],
        "stages": [
            {"name": "ball-min", "ok": cp.converged, "detail": ""},
            {"name": "certify", "ok": cp.certificate.certified, "detail": cp.certificate.diagnostic},
        ],
    }
    report = build_solve_report(
        "solve", cfg.echo(), constants, None, [run], timing_s=time.perf_counter() - t0
    )
    if cfg.report_path:
        report.write(cfg.report_path)
    if trace is not None:
        write_trace_csv(trace, cfg.trace_path)
    if not quiet:
        print(
            f"ball minimum J = {_fmt(cp.value)}  residual = {cp.residual:.3e}  "
            f"certificate = {cp.certificate.verdict}"
        )
    return EXIT_OK if cp.converged else EXIT_NONCONVERGED


def _pipeline_runs(cfg: RunConfig, lams: list[float], seeds: list[int], jobs: int, trace):
    def work(k: int):
        p, result = _run_single(cfg, lams[k], seeds[k], trace if len(lams) == 1 else None)
        return k, p, result

    results = [None] * len(lams)
    if jobs > 1 and len(lams) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for k, p, result in pool.map(work, range(len(lams))):
                results[k] = (p, result)
    else:
        for k in range(len(lams)):
            _, p, result = work(k)
            results[k] = (p, result)
    return results


def cmd_pipeline(cfg: RunConfig, quiet: bool, jobs: int, sweep: bool) -> int:
    t0 = time.perf_counter()
    lams = _resolve_lambdas(cfg)
    if sweep and cfg.lambda_mode != "sweep":
        raise ConfigError("problem.lambda_mode", "must be 'sweep' for the sweep command")
    if not sweep and len(lams) != 1:
        raise ConfigError("problem.lambda_mode", "pipeline runs a single lambda; use sweep")
    master = cfg.solver.seed
    seeds = [master] if len(lams) == 1 else [derived_seed(master, k) for k in range(len(lams))]
    trace = TraceRecorder() if cfg.trace_path else None
    results = _pipeline_runs(cfg, lams, seeds, jobs, trace)

    runs = []
    for k, (p, result) in enumerate(results):
        runs.append(pipeline_dict(result, seeds[k]))
        _export_points(cfg, k, p, result)
    constants = results[0][1].constants
    lambda_result = results[0][1].lambda_result
    report = build_solve_report(
        "sweep" if sweep else "pipeline",
        cfg.echo(),
        constants,
        lambda_result,
        runs,
        hypotheses=_hypothesis_verdicts(cfg),
        timing_s=time.perf_counter() - t0,
    )
    if cfg.report_path:
        report.write(cfg.report_path)
    if trace is not None:
        write_trace_csv(trace, cfg.trace_path)
    if not quiet:
        for lam, (p, result) in zip(lams, results):
            vals = ", ".join(_fmt(cp.value) for cp in result.points)
            print(
                f"lambda = {_fmt(lam)}: {len(result.points)} points (J = {vals}), "
                f"distinct = {result.distinct_count}"
            )
            if result.coincidence_note:
                print(f"  note: {result.coincidence_note}")
    return _runs_exit_code(runs)


def cmd_certify(cfg: RunConfig, quiet: bool) -> int:
    if not cfg.certify_vector:
        raise ConfigError("certify.vector", "is required for the certify command")
    lam = _resolve_lambdas(cfg)[0]
    p = cfg.build_problem(lam)
    try:
        u = read_vector_csv(cfg.certify_vector, p.shape)
    except (OSError, ValueError, IndexError) as exc:
        print(f"error: vector file unreadable: {exc}", file=sys.stderr)
        return EXIT_VECTOR_FILE
    t0 = time.perf_counter()
    constants = discrete_constants(p.operator, cfg.rho)
    cert = certify(p, u, rho=cfg.rho)
    run = {
        "lambda": lam,
        "seed": cfg.solver.seed,
        "certificate": certificate_dict(cert),
        "stages": [{"name": "certify", "ok": cert.certified, "detail": cert.diagnostic}],
    }
    report = build_solve_report(
        "certify", cfg.echo(), constants, None, [run], timing_s=time.perf_counter() - t0
    )
    if cfg.report_path:
        report.write(cfg.report_path)
    print(
        f"verdict = {cert.verdict}  J(u) = {_fmt(cert.j_u)}  J(v) = {_fmt(cert.j_v)}  "
        f"residual = {cert.residual:.3e}"
    )
    return EXIT_OK


def cmd_check_hypotheses(cfg: RunConfig, quiet: bool) -> int:
    verdicts = _hypothesis_verdicts(cfg)
    if verdicts is None:
        raise ConfigError(
            "hypotheses", "section is required for this nonlinearity family"
        )
    print(f"{'hypothesis':<10} {'verdict':<16} witness")
    for v in verdicts:
        if v.witness is None:
            wtxt = "-"
        else:
            wtxt = (
                f"site={v.witness.site} x={v.witness.x} "
                f"lhs={v.witness.lhs:.6g} rhs={v.witness.rhs:.6g}"
            )
        print(f"{v.hypothesis:<10} {v.verdict:<16} {wtxt}")
    return EXIT_OK


def cmd_refine(cfg: RunConfig, quiet: bool) -> int:
    from .pde import refinement_study  # local import keeps CLI startup light

    if cfg.mode != "domain":
        raise ConfigError("problem.h", "refine needs a domain-mode problem (width, height, h)")
    t0 = time.perf_counter()
    dom = cfg.domain()
    opts = _solver_for_seed(cfg, cfg.solver.seed)
    rep = refinement_study(
        dom, cfg.nonlinearity(), _resolve_lambdas(cfg)[0], levels=cfg.refine_levels,
        opts=opts, rho=cfg.rho,
    )
    run = pipeline_dict(rep.pipeline, cfg.solver.seed)
    report = build_solve_report(
        "refine",
        cfg.echo(),
        rep.pipeline.constants,
        rep.pipeline.lambda_result,
        [run],
        refinement=refinement_dict(rep, cfg.solver.seed),
        timing_s=time.perf_counter() - t0,
    )
    if cfg.report_path:
        report.write(cfg.report_path)
    if cfg.csv_dir:
        os.makedirs(cfg.csv_dir, exist_ok=True)
        for br in rep.branches:
            for lv in br.levels:
                path = os.path.join(cfg.csv_dir, f"branch_{br.kind}_h{lv.h:.6g}.csv")
                export_solution_xyz_csv(lv.point.shape, lv.point.values, lv.h, path)
    if not quiet:
        print(
            f"lambda1 = {_fmt(rep.poincare.lambda1)}  c = {_fmt(rep.poincare.c)}  "
            f"branches = {len(rep.branches)}"
        )
        for br in rep.branches:
            order = "-" if br.order is None else _fmt(br.order)
            lost = "" if br.lost_at is None else f"  lost at h = {_fmt(br.lost_at)}"
            print(f"  {br.kind}: levels = {len(br.levels)}  order = {order}{lost}")
    return _runs_exit_code([run])


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="ballcrit",
        description="Multiple critical points of lattice energies on closed balls.",
    )
    parser.add_argument("--config", help="TOML configuration (or env BALLCRIT_CONFIG)")
    parser.add_argument("--command", help="one of: " + ", ".join(COMMANDS))
    parser.add_argument("--seed", type=int, help="override solver.seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    parser.add_argument("--quiet", action="store_true", help="suppress summary output")
    args = parser.parse_args(argv)

    command = args.command
    if command is None:
        print("error: --command is required", file=sys.stderr)
        return EXIT_CONFIG
    if command not in COMMANDS:
        print(f"error: unknown command {command!r}", file=sys.stderr)
        return EXIT_UNKNOWN_COMMAND

    config_path = args.config or os.environ.get("BALLCRIT_CONFIG")
    if not config_path:
        print("error: --config (or BALLCRIT_CONFIG) is required", file=sys.stderr)
        return EXIT_CONFIG

    try:
        cfg = load_config(config_path)
        if args.seed is not None:
            cfg.solver.seed = args.seed
        if command == "eigen":
            return cmd_eigen(cfg, args.quiet)
        if command == "lambda-star":
            return cmd_lambda_star(cfg, args.quiet)
        if command == "solve":
            return cmd_solve(cfg, args.quiet)
        if command == "pipeline":
            return cmd_pipeline(cfg, args.quiet, args.jobs, sweep=False)
        if command == "sweep":
            return cmd_pipeline(cfg, args.quiet, args.jobs, sweep=True)
        if command == "certify":
            return cmd_certify(cfg, args.quiet)
        if command == "check-hypotheses":
            return cmd_check_hypotheses(cfg, args.quiet)
        if command == "refine":
            return cmd_refine(cfg, args.quiet)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
