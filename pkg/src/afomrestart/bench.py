"""Run several restart schemes over a generated batch and summarize iteration counts."""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from .bounds import nbar_rho
from .errors import CapExceededError, ConfigurationError, InputError
from .problem import evaluate
from .restart import DEFAULT_CAP, SCHEMES, SolveSettings, run_scheme
from .suite import Generated, GeneratorSpec, batch

__all__ = ["BenchmarkSummary", "InstanceResult", "SchemeStats", "run_benchmark",
           "format_table", "write_instances_csv", "write_summary_csv"]


@dataclass
class InstanceResult:
    instance: int
    scheme: str
    iterations: int
    final_gap: float
    final_distance: float
    stop_reason: str
    wall_time: float


@dataclass
class SchemeStats:
    scheme: str
    count: int
    average: float
    median: float
    maximum: float
    minimum: float
    capped: int

    @classmethod
    def from_counts(cls, scheme: str, counts: Sequence[int], capped: int) -> "SchemeStats":
        if capped:
            # a capped run has no finite iteration count
            return cls(scheme, len(counts), math.inf, math.inf, math.inf, min(counts), capped)
        return cls(scheme, len(counts), statistics.fmean(counts), float(statistics.median(counts)),
                   float(max(counts)), float(min(counts)), 0)


@dataclass
class BenchmarkSummary:
    spec: GeneratorSpec
    stop_rule: str
    instances: List[InstanceResult] = field(default_factory=list)
    stats: Dict[str, SchemeStats] = field(default_factory=dict)

    @property
    def any_capped(self) -> bool:
        return any(s.capped for s in self.stats.values())


def _restart_period(g: Generated, engine, n_restart: Optional[int]) -> int:
    if n_restart is not None:
        return n_restart
    if g.qfg is None:
        raise ConfigurationError(
            "fixed-rate restart needs --n-restart: no certified growth constant for this family")
    return math.ceil(math.e * nbar_rho(engine.a_f, g.qfg.mu))


def _final_gap(g: Generated, engine, point) -> float:
    x = engine.primal(point)
    obj = g.primal_objective
    value = evaluate(obj, x) if obj is not None else math.nan
    return value - g.certificate.optimal_value


def run_benchmark(spec: GeneratorSpec, count: int, schemes: Sequence[str] = SCHEMES,
                  stop_rule: str = "distance", epsilon: float = 1e-8, distance_tol: float = 1e-5,
                  n_restart: Optional[int] = None, cap: int = DEFAULT_CAP) -> BenchmarkSummary:
    """Solve every instance of ``batch(spec, count)`` with every scheme.

    ``stop_rule`` is ``"distance"`` (relative distance of the recovered
    primal to the certified optimum, the default for a fair comparison) or
    ``"gap"`` (outer objective decrease below ``epsilon``).
    """
    unknown = [s for s in schemes if s not in SCHEMES]
    if unknown:
        raise ConfigurationError(f"unknown schemes {unknown}; choose from {SCHEMES}")
    if stop_rule not in ("distance", "gap"):
        raise ConfigurationError(f"unknown stop rule {stop_rule!r}")
    items = batch(spec, count)
    summary = BenchmarkSummary(spec, stop_rule)
    per_scheme: Dict[str, List[int]] = {s: [] for s in schemes}
    capped = {s: 0 for s in schemes}
    for idx, (g, z0) in enumerate(items):
        if g.certificate is None:
            raise InputError("benchmarking needs certified instances")
        engine = g.engine()
        dist = g.distance(engine)
        if stop_rule == "distance":
            settings = SolveSettings(epsilon=epsilon, mode="distance", distance=dist,
                                     distance_tol=distance_tol, max_total_iterations=cap)
        else:
            settings = SolveSettings(epsilon=epsilon, max_total_iterations=cap)
        for scheme in schemes:
            period = _restart_period(g, engine, n_restart) if scheme == "fixed" else None
            t0 = time.perf_counter()
            try:
                trace = run_scheme(scheme, engine, z0, settings, n_restart=period)
                reason = trace.stop_reason
            except CapExceededError as exc:
                trace = exc.partial
                reason = "cap"
                capped[scheme] += 1
            elapsed = time.perf_counter() - t0
            point = trace.final_point
            summary.instances.append(InstanceResult(
                idx, scheme, trace.total_iterations, _final_gap(g, engine, point),
                dist(point), reason, elapsed))
            per_scheme[scheme].append(trace.total_iterations)
    for scheme in schemes:
        summary.stats[scheme] = SchemeStats.from_counts(scheme, per_scheme[scheme], capped[scheme])
    return summary


def _num(v) -> str:
    return repr(float(v))


def write_summary_csv(summary: BenchmarkSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "avg", "median", "max", "min", "instances", "capped"])
        for s in summary.stats.values():
            w.writerow([s.scheme, _num(s.average), _num(s.median), _num(s.maximum),
                        _num(s.minimum), s.count, s.capped])


def write_instances_csv(summary: BenchmarkSummary, path, wall_time: bool = True) -> None:
    header = ["instance", "scheme", "iterations", "final_gap", "rel_distance", "stop_reason"]
    if wall_time:
        header.append("wall_time_s")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in summary.instances:
            row = [r.instance, r.scheme, r.iterations, _num(r.final_gap), _num(r.final_distance),
                   r.stop_reason]
            if wall_time:
                row.append(f"{r.wall_time:.6f}")
            w.writerow(row)


def format_table(summary: BenchmarkSummary) -> str:
    lines = [f"{'scheme':<12}{'avg':>12}{'median':>12}{'max':>12}{'min':>12}"]
    for s in summary.stats.values():
        lines.append(f"{s.scheme:<12}{s.average:>12.1f}{s.median:>12.1f}"
                     f"{s.maximum:>12.0f}{s.minimum:>12.0f}")
    return "\n".join(lines)

