"""Restart schemes for accelerated first-order engines.

``afom_with_exit`` runs an engine from ``r`` and stops at the first
``k >= n`` where the decrease over the second half of the run is at most a
third of the decrease over the first half, working on the running minimum
of the raw objective values.  ``restart_adaptive`` chains such calls and
adapts the lower bound ``n_j`` from the observed decreases; it needs no
problem constants.  ``restart_fixed_rate`` restarts every ``n`` steps, and
``restart_heuristic`` implements the functional and gradient restarts.

Every scheme returns a :class:`RestartTrace`; iteration counts are engine
steps, the same unit for every scheme.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .engines import AfomEngine
from .errors import CapExceededError, ConfigurationError, InputError

__all__ = [
    "InnerRun",
    "RestartTrace",
    "SCHEMES",
    "SolveSettings",
    "afom_with_exit",
    "replay_monotone",
    "restart_adaptive",
    "restart_fixed_rate",
    "restart_heuristic",
    "run_scheme",
    "solve_without_restart",
    "write_inner_csv",
    "write_steps_csv",
    "write_trace_csv",
]

logger = logging.getLogger(__name__)

DEFAULT_CAP = 10**7
SCHEMES = ("adaptive", "fixed", "functional", "gradient", "none")


@dataclass
class SolveSettings:
    """Exit rule and bookkeeping options shared by every scheme.

    mode
        ``"gap"``: outer decrease ``f(z_j) - f(z_{j+1}) <= epsilon``.
        ``"gradient"``: ``||g(z_j)|| <= grad_tol`` (``epsilon`` if unset).
        ``"distance"``: stop as soon as ``distance(x) <= distance_tol`` for the
        raw iterate ``x`` of the engine, checked after every step.
    """

    epsilon: float = 1e-8
    mode: str = "gap"
    grad_tol: Optional[float] = None
    distance: Optional[Callable[[np.ndarray], float]] = None
    distance_tol: float = 1e-5
    max_total_iterations: int = DEFAULT_CAP
    record_inner: bool = False
    record_steps: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.max_total_iterations < 1:
            raise ConfigurationError("iteration cap must be at least 1")
        if self.mode not in ("gap", "gradient", "distance"):
            raise ConfigurationError(f"unknown exit mode {self.mode!r}")
        if self.mode == "distance" and self.distance is None:
            raise ConfigurationError("distance mode needs a distance oracle")
        if self.mode == "gradient" and self.grad_tol is not None and not self.grad_tol > 0:
            raise ConfigurationError("gradient tolerance must be positive")

    @property
    def gradient_tolerance(self) -> float:
        return self.epsilon if self.grad_tol is None else self.grad_tol


class _Meter:
    """Counts engine steps across a whole solve and enforces the cap."""

    def __init__(self, settings: SolveSettings):
        self.settings = settings
        self.count = 0
        self.history: List[tuple] = []
        self._dist = settings.distance if (settings.mode == "distance" or settings.record_steps) else None

    def step(self, run) -> np.ndarray:
        if self.count >= self.settings.max_total_iterations:
            raise CapExceededError(
                f"iteration cap {self.settings.max_total_iterations} reached")
        self.count += 1
        return next(run)

    def observe(self, x, fx) -> bool:
        """Record the raw iterate; True when the distance target is met."""
        d = self._dist(x) if self._dist is not None else math.nan
        if self.settings.record_steps:
            self.history.append((self.count, fx, d))
        return self.settings.mode == "distance" and d <= self.settings.distance_tol


@dataclass
class InnerRun:
    """Output of one :func:`afom_with_exit` call.

    ``f_values`` is the running-minimum sequence ``f(x_0) ... f(x_m)``;
    ``raw_values`` holds ``f(A(r, k))`` for ``k = 1..m`` when recorded.
    ``stopped`` is set when the distance target interrupted the run; the
    raw iterate that met it is then ``stop_point``.
    """

    m: int
    z: np.ndarray
    n: float
    f_values: List[float]
    raw_values: Optional[List[float]] = None
    stopped: bool = False
    stop_point: Optional[np.ndarray] = None
    r: Optional[np.ndarray] = None

    @property
    def f_z(self) -> float:
        return self.f_values[-1]

    @property
    def f_r(self) -> float:
        return self.f_values[0]


def afom_with_exit(engine: AfomEngine, r, n: float, settings: Optional[SolveSettings] = None,
                   _meter: Optional[_Meter] = None) -> InnerRun:
    """Run ``engine`` from ``r`` with the performance-based exit.

    Exits at the first ``k >= n`` with
    ``f(x_l) - f(x_k) <= (f(x_0) - f(x_l)) / 3`` where ``l = k // 2`` and
    ``x_k`` is the best point among ``r, A(r,1), ..., A(r,k)`` (ties adopt
    the newer iterate).  ``n`` is real; the test ``k >= n`` uses it as is.
    """
    settings = settings or SolveSettings()
    meter = _meter or _Meter(settings)
    r = np.asarray(r, dtype=float)
    if n < 0 or math.isnan(n):
        raise InputError("lower bound n must be nonnegative")
    f0 = engine.objective(r)
    if not math.isfinite(f0):
        raise InputError("starting point lies outside dom f")
    fvals = [f0]
    raw = [] if settings.record_inner else None
    x = r
    run = engine.start(r)
    k = 0
    while True:
        try:
            xk = meter.step(run)
        except CapExceededError as exc:
            exc.partial = InnerRun(k, x, n, fvals, raw, r=r)
            raise
        k += 1
        fk = engine.objective(xk)
        if raw is not None:
            raw.append(fk)
        if fk <= fvals[-1]:
            x = xk
            fvals.append(fk)
        else:
            fvals.append(fvals[-1])
        if meter.observe(xk, fk):
            return InnerRun(k, x, n, fvals, raw, stopped=True, stop_point=xk, r=r)
        ell = k // 2
        if k >= n and fvals[ell] - fvals[k] <= (fvals[0] - fvals[ell]) / 3.0:
            return InnerRun(k, x, n, fvals, raw, r=r)


def replay_monotone(engine: AfomEngine, run: InnerRun) -> bool:
    """Replay the raw engine sequence from ``run.r`` and check the stored
    running minimum: entry k must equal ``min_{i<=k} f(A(r, i))`` (with
    ``A(r, 0) = r``)."""
    if run.r is None:
        raise InputError("run does not carry its starting point")
    best = engine.objective(run.r)
    if run.f_values[0] != best:
        return False
    for k, xk in enumerate(engine.start(run.r), start=1):
        if k > run.m:
            break
        best = min(best, engine.objective(xk))
        if run.f_values[k] != best:
            return False
    return True


@dataclass
class RestartTrace:
    """Uniform record of a scheme run.

    ``z``/``f_z`` are the outer points ``z_0 ... z_{j_out+1}``; ``m`` holds
    ``m_0 = 1`` followed by the iteration count of each outer step; ``n`` and
    ``s`` hold ``n_j`` and ``s_j`` for ``j = 0 ... j_out`` (zeros for schemes
    that do not use them).
    """

    scheme: str
    z: List[np.ndarray]
    f_z: List[float]
    m: List[int]
    n: List[float]
    s: List[float]
    inner: List[InnerRun] = field(default_factory=list)
    total_iterations: int = 0
    stop_reason: str = ""
    final_point: Optional[np.ndarray] = None
    history: List[tuple] = field(default_factory=list)
    bound_applicable: bool = True
    complete: bool = True
    notes: List[str] = field(default_factory=list)

    @property
    def j_out(self) -> int:
        return len(self.n) - 1

    @property
    def inner_counts(self) -> List[int]:
        """``m_1 ... m_{j_out+1}``."""
        return self.m[1:]

    @property
    def restarts(self) -> int:
        return len(self.m) - 1

    @property
    def final_value(self) -> float:
        return self.f_z[-1]


def _new_trace(scheme, z0, f0) -> RestartTrace:
    return RestartTrace(scheme=scheme, z=[z0], f_z=[f0], m=[1], n=[], s=[])


def _start_value(engine, z0):
    z0 = np.asarray(z0, dtype=float)
    f0 = engine.objective(z0)
    if not math.isfinite(f0):
        raise InputError("initial point lies outside dom f")
    return z0, f0


def _finish(trace, meter, reason, final_point):
    trace.total_iterations = meter.count
    trace.stop_reason = reason
    trace.final_point = final_point
    trace.history = meter.history
    return trace


def _cap(trace, meter, exc, final_point):
    _finish(trace, meter, "cap", final_point)
    trace.complete = False
    raise CapExceededError(str(exc), partial=trace) from exc


def restart_adaptive(engine: AfomEngine, z0, settings: Optional[SolveSettings] = None) -> RestartTrace:
    """Restart scheme driven by successive :func:`afom_with_exit` calls.

    With ``s_j = sqrt((f(z_{j-1}) - f(z_j)) / (f(z_{j-2}) - f(z_j)))`` for
    ``j >= 2`` (0 otherwise) the j-th call uses the lower bound
    ``n_j = max(m_j, 4 s_j m_{j-1})``, starting from ``m_0 = m_{-1} = 1``.
    """
    settings = settings or SolveSettings()
    z0, f0 = _start_value(engine, z0)
    meter = _Meter(settings)
    trace = _new_trace("adaptive", z0, f0)
    fz, m = trace.f_z, trace.m
    j = -1
    while True:
        j += 1
        if j < 2:
            s = 0.0
        else:
            num, den = fz[j - 1] - fz[j], fz[j - 2] - fz[j]
            if den > 0:
                s = math.sqrt(num / den)
            else:
                s = 0.0
                logger.info("nonpositive denominator in s_%d (%.3e); s set to 0", j, den)
                trace.notes.append(f"s_{j} set to 0: denominator {den:.3e}")
        m_prev = m[j - 1] if j >= 1 else 1
        n_j = max(m[j], 4.0 * s * m_prev)
        trace.s.append(s)
        trace.n.append(n_j)
        try:
            run = afom_with_exit(engine, trace.z[j], n_j, settings, _meter=meter)
        except CapExceededError as exc:
            part = exc.partial
            if part is not None and part.m > 0:
                trace.z.append(part.z)
                fz.append(part.f_z)
                m.append(part.m)
                if settings.record_inner:
                    trace.inner.append(part)
            _cap(trace, meter, exc, trace.z[-1])
        trace.z.append(run.z)
        fz.append(run.f_z)
        m.append(run.m)
        if settings.record_inner:
            trace.inner.append(run)
        if run.stopped:
            return _finish(trace, meter, "distance", run.stop_point)
        if settings.mode == "gradient":
            g = engine.gradient_map(trace.z[j])
            if float(np.linalg.norm(g)) <= settings.gradient_tolerance:
                return _finish(trace, meter, "gradient", run.z)
        elif fz[j] - fz[j + 1] <= settings.epsilon:
            return _finish(trace, meter, "gap", run.z)


def restart_fixed_rate(engine: AfomEngine, v0, n: int, settings: Optional[SolveSettings] = None,
                       nbar: Optional[float] = None) -> RestartTrace:
    """Restart the engine every ``n`` steps: ``v_{j+1} = A(v_j, n)``.

    The exit test ``f(v_{j-1}) - f(v_j) <= epsilon`` is applied after each
    block.  When ``nbar`` is known and ``n <= nbar`` the iteration bounds do
    not apply and the trace is flagged accordingly.
    """
    settings = settings or SolveSettings()
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InputError(f"restart period must be a positive integer, got {n!r}")
    n = int(n)
    v0, f0 = _start_value(engine, v0)
    meter = _Meter(settings)
    trace = _new_trace("fixed", v0, f0)
    if nbar is not None and not n > nbar:
        trace.bound_applicable = False
        trace.notes.append(f"bound inapplicable: n={n} <= nbar={nbar:.6g}")
    j = 0
    while True:
        trace.n.append(float(n))
        trace.s.append(0.0)
        run = engine.start(trace.z[j])
        x = trace.z[j]
        try:
            for k in range(1, n + 1):
                x = meter.step(run)
                fx = engine.objective(x)
                if meter.observe(x, fx):
                    trace.z.append(x)
                    trace.f_z.append(fx)
                    trace.m.append(k)
                    return _finish(trace, meter, "distance", x)
        except CapExceededError as exc:
            _cap(trace, meter, exc, x)
        trace.z.append(x)
        trace.f_z.append(fx)
        trace.m.append(n)
        if settings.mode == "gradient":
            if float(np.linalg.norm(engine.gradient_map(trace.z[j]))) <= settings.gradient_tolerance:
                return _finish(trace, meter, "gradient", x)
        elif trace.f_z[j] - trace.f_z[j + 1] <= settings.epsilon:
            return _finish(trace, meter, "gap", x)
        j += 1


def restart_heuristic(engine: AfomEngine, z0, rule: str,
                      settings: Optional[SolveSettings] = None) -> RestartTrace:
    """Functional or gradient restart, tested after every engine step.

    functional
        restart when ``f(x_{k+1}) >= f(x_k)``.
    gradient
        restart when ``<g(x_k), x_{k+1} - x_k> >= 0``.

    A restart resets the momentum and starts a fresh run at the current
    iterate.  The global exit rule is evaluated at restart points.
    """
    if rule not in ("functional", "gradient"):
        raise ConfigurationError(f"unknown heuristic rule {rule!r}")
    settings = settings or SolveSettings()
    z0, f0 = _start_value(engine, z0)
    meter = _Meter(settings)
    trace = _new_trace(rule, z0, f0)
    prev, f_prev = z0, f0
    run = engine.start(z0)
    seg = 0
    while True:
        g_prev = engine.gradient_map(prev) if rule == "gradient" else None
        try:
            x = meter.step(run)
        except CapExceededError as exc:
            _cap(trace, meter, exc, prev)
        seg += 1
        fx = engine.objective(x)
        if meter.observe(x, fx):
            trace.n.append(0.0)
            trace.s.append(0.0)
            trace.z.append(x)
            trace.f_z.append(fx)
            trace.m.append(seg)
            return _finish(trace, meter, "distance", x)
        if rule == "functional":
            fire = fx >= f_prev
        else:
            fire = float(g_prev @ (x - prev)) >= 0.0
        if fire:
            trace.n.append(0.0)
            trace.s.append(0.0)
            trace.z.append(x)
            trace.f_z.append(fx)
            trace.m.append(seg)
            seg = 0
            if settings.mode == "gradient":
                if float(np.linalg.norm(engine.gradient_map(x))) <= settings.gradient_tolerance:
                    return _finish(trace, meter, "gradient", x)
            elif trace.f_z[-2] - fx <= settings.epsilon:
                return _finish(trace, meter, "gap", x)
            run = engine.start(x)
        prev, f_prev = x, fx


def solve_without_restart(engine: AfomEngine, z0, settings: Optional[SolveSettings] = None) -> RestartTrace:
    """Plain engine run.

    Without restarts there are no outer points to compare, so the gap rule
    uses its gradient-map equivalent ``||g(x_k)||^2 <= 2 L_f epsilon``.
    """
    settings = settings or SolveSettings()
    z0, f0 = _start_value(engine, z0)
    meter = _Meter(settings)
    trace = _new_trace("none", z0, f0)
    run = engine.start(z0)
    if settings.mode == "gradient":
        tol2 = settings.gradient_tolerance ** 2
    else:
        tol2 = 2.0 * engine.L_f * settings.epsilon
    x, fx = z0, f0
    while True:
        try:
            x = meter.step(run)
        except CapExceededError as exc:
            trace.z.append(x)
            trace.f_z.append(fx)
            trace.m.append(meter.count)
            trace.n.append(0.0)
            trace.s.append(0.0)
            _cap(trace, meter, exc, x)
        fx = engine.objective(x)
        reached = meter.observe(x, fx)
        if not reached and settings.mode != "distance":
            g = engine.gradient_map(x)
            reached = float(g @ g) <= tol2
        if reached:
            trace.z.append(x)
            trace.f_z.append(fx)
            trace.m.append(meter.count)
            trace.n.append(0.0)
            trace.s.append(0.0)
            return _finish(trace, meter, settings.mode, x)


def run_scheme(scheme: str, engine: AfomEngine, z0, settings: Optional[SolveSettings] = None,
               n_restart: Optional[int] = None, nbar: Optional[float] = None) -> RestartTrace:
    """Dispatch by scheme name (one of :data:`SCHEMES`)."""
    if scheme == "adaptive":
        return restart_adaptive(engine, z0, settings)
    if scheme == "fixed":
        if n_restart is None:
            raise ConfigurationError("fixed-rate restart needs a restart period")
        return restart_fixed_rate(engine, z0, n_restart, settings, nbar=nbar)
    if scheme in ("functional", "gradient"):
        return restart_heuristic(engine, z0, scheme, settings)
    if scheme == "none":
        return solve_without_restart(engine, z0, settings)
    raise ConfigurationError(f"unknown scheme {scheme!r}")


def _num(v) -> str:
    return repr(float(v))


def write_trace_csv(trace: RestartTrace, path) -> None:
    """Outer trace: one row per outer step ``j = 0 ... j_out``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "n_j", "s_j", "m_j+1", "f_zj", "gap", "cumulative_iterations"])
        cum = 0
        for j in range(len(trace.n)):
            m_next = trace.m[j + 1]
            cum += m_next
            w.writerow([j, _num(trace.n[j]), _num(trace.s[j]), m_next, _num(trace.f_z[j]),
                        _num(trace.f_z[j] - trace.f_z[j + 1]), cum])


def write_inner_csv(trace: RestartTrace, path) -> None:
    """Monotone inner sequences of every recorded :class:`InnerRun`."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["outer_j", "k", "f_xk"])
        for j, run in enumerate(trace.inner):
            for k, fk in enumerate(run.f_values):
                w.writerow([j, k, _num(fk)])


def write_steps_csv(trace: RestartTrace, path, f_star: Optional[float] = None) -> None:
    """Per-step series of raw iterates: objective, gap to ``f*`` and distance."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scheme", "iteration", "objective", "gap", "rel_distance"])
        for k, fk, d in trace.history:
            gap = "" if f_star is None else _num(fk - f_star)
            dist = "" if d is None or math.isnan(d) else _num(d)
            w.writerow([trace.scheme, k, _num(fk), gap, dist])
