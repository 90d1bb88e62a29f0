"""Closed-form iteration bounds and checkers that confront them with traces.

All quantities derive from ``nbar = max(1/2, sqrt(2 a_f / mu))``, where
``a_f`` is the engine's envelope constant and ``mu`` the QFG constant of the
problem on the relevant level set.  None of this is needed to *run* the
adaptive scheme; it is a verification layer for certified problems.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .errors import InputError, PreconditionError
from .restart import RestartTrace

__all__ = [
    "BoundsReport",
    "Check",
    "Verdict",
    "adaptive_bounds",
    "bounds_report",
    "check_inner_runs",
    "check_gradient_decrease",
    "check_trace_against_bounds",
    "check_trace_invariants",
    "fixed_rate_bounds",
    "nbar_rho",
    "phi",
    "phi_grid_minimum",
    "ratio_limit_exact",
]

LN15 = math.log(15.0)


def _positive(**kw):
    for name, value in kw.items():
        if not (value > 0 and math.isfinite(value)):
            raise InputError(f"{name} must be positive and finite, got {value!r}")


def nbar_rho(a_f: float, mu_rho: float) -> float:
    _positive(a_f=a_f, mu_rho=mu_rho)
    return max(0.5, math.sqrt(2.0 * a_f / mu_rho))


def _log_term(gap0, eps):
    return math.log1p(gap0 / eps)


def fixed_rate_bounds(nbar: float, gap0: float, eps: float, n: Optional[int] = None):
    """Return ``(M_bar, NF_star, n_star)`` for the fixed-rate scheme.

    ``M_bar`` is the restart-count bound for period ``n`` (``None`` if no
    period is given); ``n_star = ceil(e nbar)`` is the optimal period and
    ``NF_star`` the total-iteration bound at that period.
    """
    _positive(nbar=nbar, gap0=gap0, eps=eps)
    log_term = _log_term(gap0, eps)
    n_star = math.ceil(math.e * nbar)
    nf_star = n_star * math.ceil(1.0 + 0.5 * log_term)
    m_bar = None
    if n is not None:
        if not n > nbar:
            raise PreconditionError(f"restart period n={n} must exceed nbar={nbar}")
        # log1p keeps the denominator positive when n barely exceeds nbar
        m_bar = 1.0 + log_term / (2.0 * math.log1p((n - nbar) / nbar))
    return m_bar, nf_star, n_star


def adaptive_bounds(nbar: float, gap0: float, eps: float):
    """Return ``(NA_bar, D, ratio_limit)`` for the adaptive scheme."""
    _positive(nbar=nbar, gap0=gap0, eps=eps)
    D = math.ceil(5.0 + _log_term(gap0, eps) / LN15)
    na_bar = 0.5 * math.e * math.ceil(4.0 * nbar) * D
    ratio = 1.5 * (1.0 + 1.0 / (4.0 * nbar))
    return na_bar, D, ratio


def ratio_limit_exact(nbar: float) -> float:
    """``lim_{eps->0} NA_bar / NF_star = e ceil(4 nbar) / (ceil(e nbar) ln 15)``."""
    _positive(nbar=nbar)
    return math.e * math.ceil(4.0 * nbar) / (math.ceil(math.e * nbar) * LN15)


def phi(s: float) -> float:
    """``(1/s^2 - 1) * max(1, (4 s)^4)``."""
    if s == 0:
        raise InputError("phi is undefined at s = 0")
    return (1.0 / (s * s) - 1.0) * max(1.0, (4.0 * s) ** 4)


def phi_grid_minimum(points: int = 10**5, lo: float = 1e-6):
    """Minimum of phi over ``points`` equispaced values in ``(lo, sqrt(15)/4]``.

    The grid always contains both ends and ``s = 1/4``.
    """
    hi = math.sqrt(15.0) / 4.0
    grid = np.linspace(lo, hi, points + 1)[1:]
    grid = np.union1d(grid, [0.25, hi])
    vals = (1.0 / grid**2 - 1.0) * np.maximum(1.0, (4.0 * grid) ** 4)
    i = int(np.argmin(vals))
    return float(vals[i]), float(grid[i])


@dataclass
class BoundsReport:
    """Every closed-form bound for one set of problem constants.

    ``available`` is False when the QFG constant is not certified; all
    numeric fields are then ``None``.
    """

    available: bool
    a_f: Optional[float] = None
    mu_rho: Optional[float] = None
    gap0: Optional[float] = None
    eps: Optional[float] = None
    n: Optional[int] = None
    nbar_rho: Optional[float] = None
    n_star: Optional[int] = None
    M_bar: Optional[float] = None
    NF_star: Optional[int] = None
    NA_bar: Optional[float] = None
    D: Optional[int] = None
    ratio_limit: Optional[float] = None
    m_cap: Optional[int] = None
    reason: str = ""

    @classmethod
    def unavailable(cls, reason: str) -> "BoundsReport":
        return cls(available=False, reason=reason)

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self):
        labels = [
            ("a_f", self.a_f), ("mu_rho", self.mu_rho), ("gap0", self.gap0),
            ("eps", self.eps), ("n", self.n), ("nbar_rho", self.nbar_rho),
            ("ceil(4 nbar_rho)", self.m_cap), ("n_star", self.n_star),
            ("M_bar", self.M_bar), ("NF_star", self.NF_star), ("NA_bar", self.NA_bar),
            ("D", self.D), ("ratio_limit", self.ratio_limit),
        ]
        return [(k, v) for k, v in labels if v is not None]


def bounds_report(a_f: float, mu_rho: Optional[float], gap0: float, eps: float,
                  n: Optional[int] = None) -> BoundsReport:
    if mu_rho is None:
        return BoundsReport.unavailable("QFG constant not certified")
    nbar = nbar_rho(a_f, mu_rho)
    gap0 = max(float(gap0), np.finfo(float).tiny)
    m_bar = None
    if n is not None and n > nbar:
        m_bar, nf_star, n_star = fixed_rate_bounds(nbar, gap0, eps, n)
    else:
        _, nf_star, n_star = fixed_rate_bounds(nbar, gap0, eps)
    na_bar, D, ratio = adaptive_bounds(nbar, gap0, eps)
    return BoundsReport(
        available=True, a_f=a_f, mu_rho=mu_rho, gap0=gap0, eps=eps, n=n,
        nbar_rho=nbar, n_star=n_star, M_bar=m_bar, NF_star=nf_star,
        NA_bar=na_bar, D=D, ratio_limit=ratio, m_cap=math.ceil(4.0 * nbar),
    )


@dataclass
class Check:
    name: str
    passed: Optional[bool]
    margin: Optional[float] = None
    detail: str = ""

    @property
    def status(self) -> str:
        if self.passed is None:
            return "unavailable"
        return "pass" if self.passed else "FAIL"


@dataclass
class Verdict:
    checks: List[Check] = field(default_factory=list)

    def add(self, *checks: Check) -> "Verdict":
        self.checks.extend(checks)
        return self

    def extend(self, other: "Verdict") -> "Verdict":
        self.checks.extend(other.checks)
        return self

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def __getitem__(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def check_trace_against_bounds(trace: RestartTrace, report: BoundsReport) -> Verdict:
    """Per-call cap, total-iteration bound and the D-step growth property.

    (a) every inner count is at most ``ceil(4 nbar)``;
    (b) total iterations are at most ``NA_bar``;
    (c) when ``j_out >= D``, no ``l`` in ``[0, j_out - D]`` has
        ``m_{l+1} > m_{l+1+D} / sqrt(15)``.
    Margins are ``bound - observed`` (positive is good).
    """
    if not trace.complete:
        raise InputError("trace is incomplete (cap exceeded)")
    if not report.available:
        return Verdict([Check(name, None, detail=report.reason)
                        for name in ("inner_cap", "total_bound", "growth_D")])
    counts = trace.inner_counts
    worst = max(counts)
    a = Check("inner_cap", worst <= report.m_cap, report.m_cap - worst,
              f"max m = {worst}, ceil(4 nbar) = {report.m_cap}")
    total = sum(counts)
    b = Check("total_bound", total <= report.NA_bar, report.NA_bar - total,
              f"N = {total}, NA_bar = {report.NA_bar:.6g}")
    D, j_out = report.D, trace.j_out
    if j_out < D:
        c = Check("growth_D", True, None, f"vacuous: j_out = {j_out} < D = {D}")
    else:
        m = trace.m
        margins = [m[l + 1 + D] / math.sqrt(15.0) - m[l + 1] for l in range(0, j_out - D + 1)]
        c = Check("growth_D", min(margins) >= 0, min(margins), f"D = {D}")
    return Verdict([a, b, c])


def check_trace_invariants(trace: RestartTrace) -> Verdict:
    """Structural invariants of an adaptive trace.

    ``s_j in (0, 1]`` for ``2 <= j <= j_out``; ``m_j <= n_j <= m_{j+1}``;
    strictly decreasing outer values up to ``j_out``; N equal to the sum of
    inner counts.
    """
    j_out = trace.j_out
    s_bad = [j for j in range(2, j_out + 1) if not (0.0 < trace.s[j] <= 1.0)]
    mn_bad = [j for j in range(0, j_out + 1)
              if not (trace.m[j] <= trace.n[j] <= trace.m[j + 1])]
    dec_bad = [j for j in range(1, j_out + 1) if not trace.f_z[j] < trace.f_z[j - 1]]
    total_ok = trace.total_iterations == sum(trace.inner_counts)
    return Verdict([
        Check("s_in_unit_interval", not s_bad, None, f"violations at j = {s_bad}" if s_bad else ""),
        Check("m_n_m_sandwich", not mn_bad, None, f"violations at j = {mn_bad}" if mn_bad else ""),
        Check("strict_decrease", not dec_bad, None, f"violations at j = {dec_bad}" if dec_bad else ""),
        Check("iteration_accounting", total_ok, None,
              f"N = {trace.total_iterations}, sum m = {sum(trace.inner_counts)}"),
    ])


def check_gradient_decrease(trace: RestartTrace, engine, tol: float = 0.0) -> Check:
    """``||g(z_j)||^2 <= 2 L_f (f(z_j) - f(z_{j+1}))`` for all ``j <= j_out``."""
    worst = math.inf
    for j in range(trace.j_out + 1):
        g = engine.gradient_map(trace.z[j])
        rhs = 2.0 * engine.L_f * (trace.f_z[j] - trace.f_z[j + 1])
        worst = min(worst, rhs + 2.0 * engine.L_f * tol - float(g @ g))
    return Check("gradient_vs_decrease", worst >= 0, worst)


def check_inner_runs(trace: RestartTrace, engine, f_star: float, report: BoundsReport,
                     tol: float = 0.0) -> Verdict:
    """Per-call guarantees of the performance-based exit on every recorded run.

    (i) ``f(z) <= f(r) - ||g(r)||^2 / (2 L_f)``;
    (ii) ``f(z) - f* <= (nbar / (m + 1))^2 (f(r) - f*)``;
    (iii) ``n <= ceil(4 nbar)`` implies ``n <= m <= ceil(4 nbar)``.
    Objective comparisons allow ``tol`` for roundoff in ``f*``.
    """
    if not trace.inner:
        raise InputError("trace was recorded without inner runs")
    worst_i = worst_ii = math.inf
    bad_iii = []
    for idx, run in enumerate(trace.inner):
        g = engine.gradient_map(run.r)
        worst_i = min(worst_i, run.f_r - float(g @ g) / (2.0 * engine.L_f) - run.f_z + tol)
        if report.available:
            rhs = (report.nbar_rho / (run.m + 1)) ** 2 * (run.f_r - f_star)
            worst_ii = min(worst_ii, rhs - (run.f_z - f_star) + tol)
            if run.n <= report.m_cap and not run.stopped and not (run.n <= run.m <= report.m_cap):
                bad_iii.append(idx)
    checks = [Check("inner_decrease", worst_i >= 0, worst_i)]
    if report.available:
        checks.append(Check("inner_rate", worst_ii >= 0, worst_ii))
        checks.append(Check("inner_count_range", not bad_iii, None,
                            f"violations at calls {bad_iii}" if bad_iii else ""))
    else:
        checks.append(Check("inner_rate", None, detail=report.reason))
        checks.append(Check("inner_count_range", None, detail=report.reason))
    return Verdict(checks)
