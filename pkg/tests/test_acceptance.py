"""Acceptance criteria 1 to 10, one test each.

Every test prints a single ``PASS``/``FAIL`` line with the measured value
and its pinned tolerance, outside pytest's output capture.
"""

import math
import time

import numpy as np
import pytest

from afomrestart import (FistaEngine, SolveSettings, check_engine_rates, quadratic,
                         restart_adaptive, restart_fixed_rate)
from afomrestart.bench import run_benchmark
from afomrestart.bounds import (adaptive_bounds, bounds_report, check_inner_runs, check_gradient_decrease,
                                check_trace_invariants, fixed_rate_bounds, nbar_rho, phi,
                                ratio_limit_exact)
from afomrestart.restart import run_scheme
from afomrestart.suite import GeneratorSpec, active_set_enumerate, batch, generate

pytestmark = pytest.mark.acceptance

DIMS = (2, 10, 50)
KAPPAS = (10.0, 100.0, 1e4)
EPSILONS = (1e-4, 1e-8)
SUITE_SIZE = 200


def report(capsys, number, passed, detail):
    with capsys.disabled():
        print(f"\n[criterion {number}] {'PASS' if passed else 'FAIL'}: {detail}")


@pytest.fixture(scope="module")
def qp_suite():
    """200 certified QPs over the (n, kappa) grid, each solved at both tolerances."""
    t0 = time.perf_counter()
    combos = [(n, k) for n in DIMS for k in KAPPAS]
    per = [SUITE_SIZE // len(combos) + (i < SUITE_SIZE % len(combos)) for i in range(len(combos))]
    runs = []
    for (n, kappa), count in zip(combos, per):
        spec = GeneratorSpec("qp", n=n, kappa=kappa, seed=7000 + n * 10 + int(math.log10(kappa)),
                             initial_gap=10.0)
        for g, x0 in batch(spec, count):
            engine = g.engine()
            traces = {eps: restart_adaptive(engine, x0, SolveSettings(epsilon=eps, record_inner=True))
                      for eps in EPSILONS}
            runs.append((g, engine, x0, traces))
    assert len(runs) == SUITE_SIZE
    return runs, time.perf_counter() - t0


def _report_for(g, engine, x0, eps):
    gap0 = engine.objective(x0) - g.certificate.optimal_value
    return bounds_report(engine.a_f, g.qfg.mu, gap0, eps)


def test_criterion_1_inner_counts_capped(qp_suite, capsys):
    runs, elapsed = qp_suite
    violations, worst = 0, -math.inf
    for g, engine, x0, traces in runs:
        cap = math.ceil(4 * nbar_rho(engine.a_f, g.qfg.mu))
        for trace in traces.values():
            m_max = max(trace.inner_counts)
            worst = max(worst, m_max / cap)
            violations += sum(m > cap for m in trace.inner_counts)
    passed = violations == 0 and elapsed < 120
    report(capsys, 1, passed, f"{violations} inner counts above ceil(4 nbar) over {len(runs)} QPs; "
           f"largest m / ceil(4 nbar) = {worst:.3f}; suite runtime {elapsed:.1f}s (limit 120s)")
    assert passed


def test_criterion_2_total_iterations_bounded(qp_suite, capsys):
    runs, _ = qp_suite
    violations, worst = 0, 0.0
    for g, engine, x0, traces in runs:
        for eps, trace in traces.items():
            rep = _report_for(g, engine, x0, eps)
            worst = max(worst, trace.total_iterations / rep.NA_bar)
            violations += trace.total_iterations > rep.NA_bar
    report(capsys, 2, violations == 0,
           f"{violations} traces with N > NA_bar at eps in {EPSILONS}; largest N / NA_bar = {worst:.3f}")
    assert violations == 0


def test_criterion_3_inner_run_guarantees(qp_suite, capsys):
    runs, _ = qp_suite
    calls = range_bad = rate_bad = lib_bad = 0
    worst_rate = math.inf
    for g, engine, x0, traces in runs:
        f_star, tol = g.certificate.optimal_value, g.certificate.tolerance
        for eps, trace in traces.items():
            rep = _report_for(g, engine, x0, eps)
            for run in trace.inner:
                calls += 1
                if run.n <= rep.m_cap and not (run.n <= run.m <= rep.m_cap):
                    range_bad += 1
                rhs = (rep.nbar_rho / (run.m + 1)) ** 2 * (run.f_r - f_star)
                slack = rhs - (run.f_z - f_star) + tol
                worst_rate = min(worst_rate, slack)
                rate_bad += slack < 0
            lib_bad += not check_inner_runs(trace, engine, f_star, rep, tol).passed
    passed = range_bad == 0 and rate_bad == 0 and lib_bad == 0
    report(capsys, 3, passed, f"{calls} inner calls; {range_bad} count-range and {rate_bad} rate "
           f"violations (tolerance 1e-9(1+|f*|)); smallest rate slack {worst_rate:.3g}; "
           f"{lib_bad} traces rejected by check_inner_runs")
    assert passed


def test_criterion_4_engine_conformance(qp_suite, capsys):
    runs, _ = qp_suite
    failures, worst = 0, math.inf
    rng = np.random.default_rng(4)
    for g, engine, x0, _ in runs:
        starts = [x0, x0 + rng.standard_normal(x0.size)]
        a1 = check_engine_rates(engine, g.certificate, starts, 500)
        worst = min(worst, a1.worst_decrease_slack + a1.tolerance,
                    a1.worst_envelope_slack + a1.tolerance)
        failures += not a1.passed
    report(capsys, 4, failures == 0, f"{failures} of {len(runs)} instances fail sufficient decrease "
           f"or the envelope for k <= 500; smallest slack incl. tolerance {worst:.3g}")
    assert failures == 0


def test_criterion_5_trace_invariants(qp_suite, capsys):
    runs, _ = qp_suite
    bad_inv = bad_gradient = traces_seen = 0
    for g, engine, _, traces in runs:
        for trace in traces.values():
            traces_seen += 1
            bad_inv += not check_trace_invariants(trace).passed
            bad_gradient += not check_gradient_decrease(trace, engine, g.certificate.tolerance).passed
    passed = bad_inv == 0 and bad_gradient == 0
    report(capsys, 5, passed, f"{traces_seen} adaptive traces; {bad_inv} break s/m/n invariants; "
           f"{bad_gradient} break the gradient-map inequality")
    assert passed


def test_criterion_6_phi_minimum(capsys):
    hi = math.sqrt(15) / 4
    grid = np.linspace(1e-6, hi, 10**5 + 1)[1:]
    vals = (1 / grid**2 - 1) * np.maximum(1, (4 * grid) ** 4)
    at_quarter, at_hi = phi(0.25), phi(hi)
    passed = (vals.min() >= 15 - 1e-9 and abs(at_quarter - 15) <= 1e-9 and abs(at_hi - 15) <= 1e-9)
    report(capsys, 6, passed, f"grid minimum {vals.min():.12f} (need >= 15 - 1e-9); "
           f"phi(1/4) = {at_quarter!r}, phi(sqrt(15)/4) = {at_hi!r}")
    assert passed


def test_criterion_7_fixed_rate(capsys):
    f = quadratic(np.diag([1.0, 100.0]))
    engine = FistaEngine(f)
    x0 = np.array([1.0, 1.0])
    gap0 = f(x0)
    nbar = nbar_rho(engine.a_f, 1.0)
    n = math.ceil(math.e * nbar)
    m_bar, nf_star, _ = fixed_rate_bounds(nbar, gap0, 1e-6, n)
    trace = restart_fixed_rate(engine, x0, n, SolveSettings(epsilon=1e-6), nbar=nbar)
    M, N = trace.restarts, trace.total_iterations
    passed = M <= math.ceil(m_bar) and N <= nf_star
    report(capsys, 7, passed, f"n = {n}, gap0 = {gap0}: M = {M} <= ceil({m_bar:.3f}); "
           f"N_F = {N} <= NF_star = {nf_star}")
    assert passed


def test_criterion_8_ratio_limit(capsys):
    rows, passed = [], True
    for nbar in (1, 5, 20, 100):
        na = adaptive_bounds(nbar, 1.0, 1e-12)[0]
        nf = fixed_rate_bounds(nbar, 1.0, 1e-12)[1]
        limit = 1.5 * (1 + 1 / (4 * nbar)) + 0.01
        ok = na / nf < limit
        passed &= ok
        rows.append(f"nbar={nbar}: {na / nf:.4f} vs {limit:.4f} (eps->0 value "
                    f"{ratio_limit_exact(nbar):.4f})")
    report(capsys, 8, passed, "NA_bar / NF_star at eps = 1e-12, gap0 = 1: " + "; ".join(rows))
    assert passed


def test_criterion_9_mpc_ordering(capsys):
    t0 = time.perf_counter()
    summary = run_benchmark(GeneratorSpec("mpc-springs", seed=2024), 50,
                            ["none", "adaptive", "fixed", "functional", "gradient"],
                            stop_rule="distance", distance_tol=1e-5, n_restart=50)
    elapsed = time.perf_counter() - t0
    avg = {s: st.average for s, st in summary.stats.items()}
    finite = all(math.isfinite(v) for v in avg.values())
    passed = finite and avg["none"] > avg["adaptive"] and elapsed < 600
    table = ", ".join(f"{s} {v:.1f}" for s, v in avg.items())
    report(capsys, 9, passed, f"average iterations over 50 instances: {table}; "
           f"runtime {elapsed:.1f}s (limit 600s)")
    assert passed


def test_criterion_10_dual_matches_enumeration(capsys):
    worst, failures, solved = 0.0, 0, 0
    settings = SolveSettings(epsilon=1e-14, max_total_iterations=10**6)
    for i in range(20):
        n = 1 + i % 3
        g = generate(GeneratorSpec("boxqp", n=n, kappa=10.0 ** (1 + i % 4), seed=900 + i))
        H, c = g.problem.H, g.problem.c
        lb, ub = g.primal_objective.params["lb"], g.primal_objective.params["ub"]
        G = np.vstack([np.eye(n), -np.eye(n)])
        x_enum, _ = active_set_enumerate(H, c, G, np.concatenate([ub, -lb]))
        scale = np.linalg.norm(x_enum) or 1.0
        engine = g.engine()
        for scheme in ("adaptive", "fixed", "functional", "gradient", "none"):
            trace = run_scheme(scheme, engine, g.default_start(), settings, n_restart=20)
            rel = np.linalg.norm(engine.primal(trace.final_point) - x_enum) / scale
            worst = max(worst, rel)
            failures += rel > 1e-5
            solved += 1
    report(capsys, 10, failures == 0, f"{solved} solves over 20 box QPs (n <= 3); worst relative "
           f"distance to the enumerated optimum {worst:.3g} (limit 1e-5)")
    assert failures == 0
