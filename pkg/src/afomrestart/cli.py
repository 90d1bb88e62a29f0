"""Command-line front end: ``afomrestart {solve,bench,verify,plot,bounds}``.

Exit status: 0 success, 1 input or configuration error, 2 iteration cap
exceeded, 3 a verification check failed.  Output files go to ``--out``,
else to ``$AFOMRESTART_OUTDIR``, else to the current directory.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__
from .bench import format_table, run_benchmark, write_instances_csv, write_summary_csv
from .bounds import (Check, Verdict, bounds_report, check_inner_runs, check_gradient_decrease,
                     check_trace_against_bounds, check_trace_invariants, phi_grid_minimum)
from .engines import check_engine_rates
from .errors import AfomError, CapExceededError, InputError
from .plotting import Series, load_series, plot_benchmark, plot_series, write_series_csv
from .problem import verify_qfg
from .restart import (DEFAULT_CAP, SCHEMES, SolveSettings, replay_monotone, restart_adaptive,
                      run_scheme, write_inner_csv, write_steps_csv, write_trace_csv)
from .serialize import (bounds_to_dict, dump_generated, dump_problem, load_document, read_json,
                        write_json)
from .suite import FAMILIES, GeneratorSpec, generate

OUTDIR_ENV = "AFOMRESTART_OUTDIR"
EXIT_OK, EXIT_INPUT, EXIT_CAP, EXIT_VERIFY = 0, 1, 2, 3

log = logging.getLogger("afomrestart")


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; here that code means 'cap exceeded'."""

    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _outdir(args) -> Path:
    path = Path(args.out or os.environ.get(OUTDIR_ENV) or ".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _add_source(p):
    src = p.add_argument_group("problem source (a file, or generator flags)")
    src.add_argument("--problem", metavar="JSON", help="problem or generator document")
    src.add_argument("--family", choices=FAMILIES, default="qp")
    src.add_argument("--n", type=int, default=10, help="dimension (qp, boxqp, lasso)")
    src.add_argument("--kappa", type=float, default=100.0, help="condition number")
    src.add_argument("--seed", type=int, default=0)
    src.add_argument("--horizon", type=int, default=10, help="mpc-springs prediction horizon")
    src.add_argument("--u-max", type=float, default=0.5, help="mpc-springs input bound")
    src.add_argument("--no-precondition", action="store_true",
                     help="disable Jacobi scaling of the dual (mpc-springs)")
    src.add_argument("--initial-gap", type=float, default=10.0,
                     help="bench: initial objective gap for qp/lasso instances")


def _spec_from_args(args) -> GeneratorSpec:
    return GeneratorSpec(family=args.family, n=args.n, kappa=args.kappa, seed=args.seed,
                         horizon=args.horizon, u_max=args.u_max,
                         precondition=False if args.no_precondition else None,
                         initial_gap=args.initial_gap)


def _load(args):
    if args.problem:
        return load_document(read_json(args.problem))
    return generate(_spec_from_args(args))


def _add_settings(p, default_mode="gap"):
    p.add_argument("--eps", type=float, default=1e-8, help="outer exit tolerance")
    p.add_argument("--mode", choices=("gap", "gradient", "distance"), default=default_mode)
    p.add_argument("--grad-tol", type=float, default=None)
    p.add_argument("--distance-tol", type=float, default=1e-5)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP, help="total iteration cap")


def _engine(g, args):
    engine = g.engine()
    if getattr(args, "understate_af", None):
        engine = g.engine(a_f=engine.a_f / args.understate_af)
        log.warning("fault injection: a_f divided by %g", args.understate_af)
    return engine


def _settings(args, g, engine, **extra) -> SolveSettings:
    dist = g.distance(engine) if g.certificate is not None else None
    if args.mode == "distance" and dist is None:
        raise InputError("the distance stop rule needs a certified optimum")
    return SolveSettings(epsilon=args.eps, mode=args.mode, grad_tol=args.grad_tol,
                         distance=dist, distance_tol=args.distance_tol,
                         max_total_iterations=args.cap, **extra)


def _start_point(g, engine, choice):
    if choice == "optimum":
        if g.certificate is None:
            raise InputError("--start optimum needs a certified optimum")
        return np.array(g.engine_certificate(engine).optimal_point, dtype=float)
    return g.default_start()


def _report_for(g, engine, z0, eps, n=None):
    if g.certificate is None or g.qfg is None or g.is_dual:
        return bounds_report(engine.a_f, None, 1.0, eps)
    gap0 = engine.objective(z0) - g.engine_certificate(engine).optimal_value
    return bounds_report(engine.a_f, g.qfg.mu, gap0, eps, n)


# ---------------------------------------------------------------- solve

def cmd_solve(args) -> int:
    g = _load(args)
    if args.save_problem:
        doc = dump_generated(g) if g.spec else dump_problem(g.problem, g.certificate, g.qfg)
        write_json(doc, args.save_problem)
    engine = _engine(g, args)
    z0 = _start_point(g, engine, args.start)
    settings = _settings(args, g, engine, record_inner=True,
                         record_steps=g.certificate is not None)
    out = _outdir(args)
    status = EXIT_OK
    try:
        trace = run_scheme(args.scheme, engine, z0, settings, n_restart=args.n_restart)
    except CapExceededError as exc:
        trace = exc.partial
        status = EXIT_CAP
        print(f"error: {exc}", file=sys.stderr)
    stem = args.name or f"{args.scheme}"
    write_trace_csv(trace, out / f"{stem}_trace.csv")
    if trace.inner:
        write_inner_csv(trace, out / f"{stem}_inner.csv")
    f_star = None
    if g.certificate is not None:
        f_star = g.engine_certificate(engine).optimal_value
        write_steps_csv(trace, out / f"{stem}_steps.csv", f_star=f_star)
        if args.plot and trace.history:
            series = load_series([out / f"{stem}_steps.csv"])
            label = g.spec.family if g.spec else "problem"
            plot_series(series, out / f"{stem}.svg", title=f"{label} / {args.scheme}")
    print(f"scheme           {args.scheme}")
    print(f"stop reason      {trace.stop_reason}")
    print(f"iterations N     {trace.total_iterations}")
    print(f"outer steps      {trace.j_out}  (j_out)")
    print(f"final objective  {engine.objective(trace.final_point)!r}")
    if f_star is not None:
        print(f"final gap        {engine.objective(trace.final_point) - f_star!r}")
    for note in trace.notes:
        print(f"note: {note}")
    if status == EXIT_OK and args.scheme == "adaptive":
        report = _report_for(g, engine, z0, args.eps)
        if report.available:
            within = "within" if trace.total_iterations <= report.NA_bar else "EXCEEDED"
            print(f"bound NA_bar     {report.NA_bar:.6g}  ({within})")
    return status


# ---------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    if args.config:
        doc = read_json(args.config)
        spec = GeneratorSpec.from_dict(doc.get("generator", doc))
    else:
        spec = _spec_from_args(args)
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    summary = run_benchmark(spec, args.count, schemes, stop_rule=args.stop, epsilon=args.eps,
                            distance_tol=args.distance_tol, n_restart=args.n_restart, cap=args.cap)
    out = _outdir(args)
    stem = args.name or f"bench_{spec.family}"
    write_summary_csv(summary, out / f"{stem}_summary.csv")
    write_instances_csv(summary, out / f"{stem}_instances.csv", wall_time=not args.no_wall_time)
    finished = any(st.capped == 0 for st in summary.stats.values())
    if args.plot and finished:
        plot_benchmark(summary.stats, out / f"{stem}.svg",
                       title=f"{spec.family}: {args.count} instances, stop rule {args.stop}")
    print(format_table(summary))
    if summary.any_capped:
        print("error: some runs hit the iteration cap", file=sys.stderr)
        return EXIT_CAP
    return EXIT_OK


# ---------------------------------------------------------------- verify

def _samples_around(x_star, count, rng, radius):
    d = rng.standard_normal((count, x_star.size))
    r = radius * rng.uniform(0.05, 1.0, count)
    return [x_star + r[i] * d[i] / np.linalg.norm(d[i]) for i in range(count)]


def _verify(g, engine, args) -> Verdict:
    verdict = Verdict()
    rng = np.random.default_rng(args.seed)
    cert = g.engine_certificate(engine) if g.certificate is not None else None
    z0 = g.default_start()
    mu = g.qfg.mu if (g.qfg is not None and not g.is_dual) else None
    dim = z0.size

    # quadratic functional growth on the engine's own objective
    if mu is not None and cert is not None and cert.projection is not None:
        pts = _samples_around(np.asarray(cert.optimal_point), args.samples, rng, 10.0)
        rep = verify_qfg(engine.f, cert, g.qfg, pts)
        verdict.add(Check("qfg", rep.passed, rep.min_ratio - rep.mu,
                          f"{len(rep.ratios)} samples, min ratio {rep.min_ratio:.6g}, mu {rep.mu:.6g}"))
    else:
        verdict.add(Check("qfg", None, detail="no growth constant certified"))

    # sufficient decrease and the O(1/k^2) envelope
    if cert is not None and cert.projection is not None and mu is not None:
        starts = [z0 + rng.standard_normal(dim) for _ in range(3)] + [z0]
        a1 = check_engine_rates(engine, cert, starts, args.k_max)
        verdict.add(Check("sufficient_decrease", a1.decrease_ok, a1.worst_decrease_slack),
                    Check("envelope", a1.envelope_ok, a1.worst_envelope_slack,
                          f"k <= {args.k_max}, worst at k = {a1.worst_envelope_k}"))
    else:
        verdict.add(Check("sufficient_decrease", None, detail="no projection onto the optimal set"),
                    Check("envelope", None, detail="no projection onto the optimal set"))

    # adaptive solve plus every trace-level check
    settings = SolveSettings(epsilon=args.eps, max_total_iterations=args.cap, record_inner=True)
    trace = restart_adaptive(engine, z0, settings)
    report = _report_for(g, engine, z0, args.eps)
    verdict.extend(check_trace_invariants(trace))
    tol = cert.tolerance if cert is not None else 0.0
    verdict.add(check_gradient_decrease(trace, engine, tol))
    verdict.add(Check("monotone_replay", all(replay_monotone(engine, r) for r in trace.inner)))
    if cert is not None:
        verdict.extend(check_inner_runs(trace, engine, cert.optimal_value, report, tol))
    verdict.extend(check_trace_against_bounds(trace, report))

    val, arg = phi_grid_minimum()
    verdict.add(Check("phi_minimum", val >= 15 - 1e-9, val - 15, f"min {val:.12g} at s = {arg:.6g}"))
    return verdict


def cmd_verify(args) -> int:
    g = _load(args)
    engine = _engine(g, args)
    verdict = _verify(g, engine, args)
    width = max(len(c.name) for c in verdict.checks)
    for c in verdict.checks:
        margin = "" if c.margin is None else f"  margin {c.margin:.6g}"
        detail = f"  ({c.detail})" if c.detail else ""
        print(f"{c.name:<{width}}  {c.status}{margin}{detail}")
    return EXIT_OK if verdict.passed else EXIT_VERIFY


# ---------------------------------------------------------------- plot

def cmd_plot(args) -> int:
    series: List[Series] = load_series(args.traces)
    out = _outdir(args)
    stem = args.name or "convergence"
    write_series_csv(series, out / f"{stem}.csv")
    if not args.no_svg:
        plot_series(series, out / f"{stem}.svg", title=args.title or "", level=args.level)
    if series[0].quantity != "rel_distance":
        print(f"note: no distance series in the input; plotted {series[0].quantity}")
    return EXIT_OK


# ---------------------------------------------------------------- bounds

def cmd_bounds(args) -> int:
    report = bounds_report(args.a_f, args.mu, args.gap0, args.eps, args.n_restart)
    if not report.available:
        print(f"bounds unavailable: {report.reason}")
    for label, value in report.rows():
        shown = f"{value:.6g}" if isinstance(value, float) else str(value)
        print(f"{label:<18}{shown}")
    if args.n_restart is not None and report.M_bar is None and report.available:
        print(f"note: n = {args.n_restart} does not exceed nbar_rho; M_bar not defined")
    if args.json:
        write_json(bounds_to_dict(report), _outdir(args) / args.json)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="afomrestart", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run one restart scheme on one problem")
    _add_source(p)
    _add_settings(p)
    p.add_argument("--scheme", choices=SCHEMES, default="adaptive")
    p.add_argument("--n-restart", type=int, default=None, help="period of the fixed-rate scheme")
    p.add_argument("--start", choices=("default", "optimum"), default="default")
    p.add_argument("--understate-af", type=float, default=None, metavar="FACTOR",
                   help="fault injection: divide the engine's a_f by FACTOR")
    p.add_argument("--save-problem", metavar="JSON", help="also write the problem document")
    p.add_argument("--no-plot", dest="plot", action="store_false")
    p.add_argument("--out", help=f"output directory (default ${OUTDIR_ENV} or .)")
    p.add_argument("--name", help="file name stem")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run several schemes over a generated batch")
    _add_source(p)
    p.add_argument("--config", metavar="JSON", help="generator document for the batch")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--schemes", default=",".join(SCHEMES))
    p.add_argument("--stop", choices=("distance", "gap"), default="distance")
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--distance-tol", type=float, default=1e-5)
    p.add_argument("--n-restart", type=int, default=None)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--no-wall-time", action="store_true", help="omit the wall-time column")
    p.add_argument("--no-plot", dest="plot", action="store_false")
    p.add_argument("--out")
    p.add_argument("--name")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="check engine, trace and bound inequalities")
    _add_source(p)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--k-max", type=int, default=500)
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--understate-af", type=float, default=None, metavar="FACTOR")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("plot", help="convergence chart from per-step trace files")
    p.add_argument("traces", nargs="*")
    p.add_argument("--level", type=float, default=None, help="draw a horizontal reference line")
    p.add_argument("--title")
    p.add_argument("--no-svg", action="store_true")
    p.add_argument("--out")
    p.add_argument("--name")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("bounds", help="print the closed-form iteration bounds")
    p.add_argument("--a-f", type=float, required=True)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--gap0", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--n-restart", type=int, default=None)
    p.add_argument("--json", metavar="FILE", help="also write the report as JSON")
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except AfomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_status
    except (ValueError, KeyError, np.linalg.LinAlgError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
