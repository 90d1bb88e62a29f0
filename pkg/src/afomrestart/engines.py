"""Accelerated first-order engines.

An engine exposes the iterate oracle ``A(x0, k)`` both as a one-shot call
(:meth:`AfomEngine.iterate`) and incrementally (:meth:`AfomEngine.start`, a
generator yielding ``A(x0, 1), A(x0, 2), ...``) so that restart schemes pay
one step per iteration.  It also carries the constants ``L_f`` and ``a_f``
of the sufficient-decrease and O(1/k^2) envelope inequalities, and the
gradient operator ``g`` that vanishes exactly on the optimal set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import (ConfigurationError, DegenerateInputError, InputError,
                     UnsupportedQueryError)
from .problem import (CompositeObjective, OptimumCertificate, certificate_tolerance,
                      evaluate, quadratic)

__all__ = [
    "AfomEngine",
    "EngineRateReport",
    "DualQpEngine",
    "DualQpProblem",
    "FistaEngine",
    "check_engine_rates",
    "dual_qp_engine",
    "fista_engine",
]


class AfomEngine:
    """Interface shared by all engines.

    Subclasses implement :meth:`start`, :meth:`objective` and
    :meth:`gradient_map`.  ``primal`` maps an iterate to the point a user
    cares about (identity unless the engine works in a dual space).
    """

    L_f: float
    a_f: float
    dimension: int

    def start(self, x0) -> Iterator[np.ndarray]:
        raise NotImplementedError

    def objective(self, x) -> float:
        raise NotImplementedError

    def gradient_map(self, x) -> np.ndarray:
        raise NotImplementedError

    def primal(self, x) -> np.ndarray:
        return x

    def iterate(self, x0, k: int) -> np.ndarray:
        """``A(x0, k)``: the k-th iterate of a fresh run started at ``x0``."""
        if k < 1:
            raise InputError("k must be a positive integer")
        run = self.start(x0)
        for _ in range(k - 1):
            next(run)
        return next(run)


class FistaEngine(AfomEngine):
    """FISTA with constant step ``1/L`` and the standard momentum sequence.

    ``L_f = L`` and ``a_f = 2 L`` unless ``a_f`` is given explicitly (used to
    inject faults in verification runs).
    """

    def __init__(self, objective: CompositeObjective, a_f: Optional[float] = None):
        L = float(objective.smoothness_constant)
        if not L > 0 or not math.isfinite(L):
            raise ConfigurationError(f"smoothness constant must be positive, got {L}")
        self.f = objective
        self.dimension = objective.dimension
        self.L_f = L
        self.a_f = 2.0 * L if a_f is None else float(a_f)
        if not self.a_f > 0:
            raise ConfigurationError("a_f must be positive")

    def objective(self, x) -> float:
        return evaluate(self.f, x)

    def _prox_grad(self, y):
        f = self.f
        return f.prox(y - f.smooth_gradient(y) / self.L_f, 1.0 / self.L_f)

    def gradient_map(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return self.L_f * (x - self._prox_grad(x))

    def start(self, x0) -> Iterator[np.ndarray]:
        x_prev = self.f.check_point(x0).copy()
        y = x_prev
        t = 1.0
        while True:
            x = self._prox_grad(y)
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x + ((t - 1.0) / t_next) * (x - x_prev)
            x_prev, t = x, t_next
            yield x


def fista_engine(objective: CompositeObjective) -> FistaEngine:
    return FistaEngine(objective)


@dataclass
class DualQpProblem:
    """``min 0.5 x'Hx + c'x  s.t.  Gx <= h`` with ``H`` positive definite.

    Box-constrained problems keep their bounds in ``lb``/``ub``; ``G``/``h``
    then hold the (possibly row-scaled) rows ``x_i <= ub_i`` and
    ``-x_i <= -lb_i``.  ``row_scaling`` records the diagonal Jacobi scaling
    applied to the rows, if any.
    """

    H: np.ndarray
    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    lb: Optional[np.ndarray] = None
    ub: Optional[np.ndarray] = None
    row_scaling: Optional[np.ndarray] = None
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.H = np.atleast_2d(np.array(self.H, dtype=float))
        n = self.H.shape[0]
        self.c = np.array(self.c, dtype=float).reshape(n)
        self.G = np.array(self.G, dtype=float).reshape(-1, n)
        self.h = np.array(self.h, dtype=float).reshape(-1)
        if self.G.shape[0] == 0:
            raise DegenerateInputError("dual engine needs at least one constraint")
        if self.h.shape[0] != self.G.shape[0]:
            raise InputError("G and h have inconsistent sizes")
        if not np.allclose(self.H, self.H.T, rtol=0, atol=1e-12 * np.abs(self.H).max()):
            raise ConfigurationError("H must be symmetric")
        try:
            self.chol = scipy.linalg.cho_factor(self.H)
        except np.linalg.LinAlgError as exc:
            raise ConfigurationError("H is not positive definite") from exc
        self._check_feasible()

    @classmethod
    def from_box(cls, H, c, lb=None, ub=None, precondition=False):
        H = np.atleast_2d(np.array(H, dtype=float))
        n = H.shape[0]
        lb = np.full(n, -np.inf) if lb is None else np.broadcast_to(np.asarray(lb, float), (n,)).copy()
        ub = np.full(n, np.inf) if ub is None else np.broadcast_to(np.asarray(ub, float), (n,)).copy()
        if np.any(lb > ub):
            raise ConfigurationError("infeasible box: lb > ub")
        eye = np.eye(n)
        up, lo = np.isfinite(ub), np.isfinite(lb)
        G = np.vstack([eye[up], -eye[lo]])
        h = np.concatenate([ub[up], -lb[lo]])
        scaling = None
        if precondition and G.shape[0]:
            Hinv = scipy.linalg.cho_solve(scipy.linalg.cho_factor(H), np.eye(n))
            scaling = 1.0 / np.sqrt(np.einsum("ij,jk,ik->i", G, Hinv, G))
            G = scaling[:, None] * G
            h = scaling * h
        return cls(H, c, G, h, lb=lb, ub=ub, row_scaling=scaling)

    def _check_feasible(self):
        if self.lb is not None:
            if np.any(self.lb > self.ub):
                raise ConfigurationError("infeasible box: lb > ub")
            return
        n = self.H.shape[0]
        res = scipy.optimize.linprog(np.zeros(n), A_ub=self.G, b_ub=self.h,
                                     bounds=[(None, None)] * n, method="highs")
        if res.status != 0:
            raise ConfigurationError("constraints Gx <= h are infeasible")

    @property
    def dimension(self) -> int:
        return self.H.shape[0]

    @property
    def sigma_f(self) -> float:
        """Strong convexity constant of the primal objective."""
        return float(np.linalg.eigvalsh(self.H)[0])

    @property
    def spectral_bound(self) -> float:
        """``rho(G G')``, the spectral radius entering ``L_f``."""
        return float(np.linalg.norm(self.G, 2) ** 2)

    @property
    def is_box(self) -> bool:
        return self.lb is not None

    def primal_objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ (self.H @ x)) + float(self.c @ x)

    def primal_objective_full(self, x) -> float:
        """Primal objective including the constraint indicator."""
        x = np.asarray(x, dtype=float)
        if np.any(self.G @ x - self.h > 1e-12 * (1 + np.abs(self.h))):
            return math.inf
        return self.primal_objective(x)


class DualQpEngine(FistaEngine):
    """FISTA applied to the negated dual of a :class:`DualQpProblem`.

    The iterate space is the multiplier vector ``lam >= 0``; the engine
    minimizes ``-D(lam) = 0.5 w'H^{-1}w + h'lam`` with ``w = c + G'lam``,
    which is exactly fast AMA on this splitting.  ``L_f = rho(GG')/sigma_f``
    and ``a_f = 2 L_f``.
    """

    def __init__(self, problem: DualQpProblem, a_f: Optional[float] = None):
        self.problem = problem
        n = problem.dimension
        Hinv = scipy.linalg.cho_solve(problem.chol, np.eye(n))
        self._Hinv_c = Hinv @ problem.c
        self._Hinv_Gt = Hinv @ problem.G.T
        M = problem.G @ self._Hinv_Gt
        M = 0.5 * (M + M.T)
        q = problem.G @ self._Hinv_c + problem.h
        offset = 0.5 * float(problem.c @ self._Hinv_c)
        L_f = problem.spectral_bound / problem.sigma_f
        dual_objective = quadratic(M, q, lb=0.0, offset=offset, smoothness=L_f,
                                   name="negated-dual")
        super().__init__(dual_objective, a_f=a_f)

    def primal(self, lam) -> np.ndarray:
        """Primal point ``argmin_x L(x, lam)``, projected onto the box for box problems."""
        x = -(self._Hinv_c + self._Hinv_Gt @ lam)
        if self.problem.is_box:
            x = np.clip(x, self.problem.lb, self.problem.ub)
        return x

    def dual_certificate(self, primal_certificate: OptimumCertificate) -> OptimumCertificate:
        """Dual optimum recovered from a primal optimum through the KKT conditions.

        The optimal value is ``-p*`` by strong duality.  A projection oracle
        is attached only when the active constraint rows are linearly
        independent (the dual optimum is then unique).
        """
        p = self.problem
        x_star = np.asarray(primal_certificate.optimal_point, dtype=float)
        residual = p.G @ x_star - p.h
        scale = 1e-9 * (1.0 + np.abs(p.h))
        active = np.flatnonzero(residual >= -scale)
        lam = np.zeros(p.G.shape[0])
        unique = True
        if active.size:
            GA = p.G[active]
            r = p.H @ x_star + p.c
            lam_a, *_ = np.linalg.lstsq(GA.T, -r, rcond=None)
            lam[active] = np.maximum(lam_a, 0.0)
            unique = np.linalg.matrix_rank(GA) == active.size
        lam.setflags(write=False)
        return OptimumCertificate(
            optimal_value=-primal_certificate.optimal_value,
            optimal_point=lam,
            projection=(lambda _: lam) if unique else None,
            numerical=primal_certificate.numerical,
            accuracy=primal_certificate.accuracy,
        )


def dual_qp_engine(problem: DualQpProblem) -> DualQpEngine:
    return DualQpEngine(problem)


@dataclass
class EngineRateReport:
    worst_decrease_slack: float
    worst_envelope_slack: float
    worst_envelope_k: int
    tolerance: float
    checked_points: int
    k_max: int

    @property
    def decrease_ok(self) -> bool:
        return self.worst_decrease_slack >= -self.tolerance

    @property
    def envelope_ok(self) -> bool:
        return self.worst_envelope_slack >= -self.tolerance

    @property
    def passed(self) -> bool:
        return self.decrease_ok and self.envelope_ok


def check_engine_rates(engine: AfomEngine, opt: OptimumCertificate, x0_set,
                      k_max: int) -> EngineRateReport:
    """Check sufficient decrease at k=1 and the ``a_f ||x0 - proj(x0)||^2/(k+1)^2``
    envelope for every ``k <= k_max`` along fresh runs from each ``x0``.

    Slacks are ``rhs - lhs``; the check passes when no slack is below
    ``-1e-9 (1 + |f*|)``.
    """
    if opt is None or opt.projection is None:
        raise UnsupportedQueryError("engine rate checks need a projection onto the optimal set")
    f_star = opt.optimal_value
    tol = max(certificate_tolerance(f_star), opt.tolerance)
    worst_dec = math.inf
    worst_env, worst_k = math.inf, 0
    count = 0
    for x0 in x0_set:
        x0 = np.asarray(x0, dtype=float)
        f0 = engine.objective(x0)
        if not math.isfinite(f0):
            raise InputError("initial point outside dom f")
        count += 1
        g0 = engine.gradient_map(x0)
        dist2 = float(np.sum((x0 - opt.projection(x0)) ** 2))
        for k, xk in enumerate(engine.start(x0), start=1):
            fk = engine.objective(xk)
            if k == 1:
                slack = f0 - float(g0 @ g0) / (2.0 * engine.L_f) - fk
                worst_dec = min(worst_dec, slack)
            slack = engine.a_f * dist2 / (k + 1) ** 2 - (fk - f_star)
            if slack < worst_env:
                worst_env, worst_k = slack, k
            if k >= k_max:
                break
    if count == 0:
        raise DegenerateInputError("empty set of initial points")
    return EngineRateReport(worst_dec, worst_env, worst_k, tol, count, k_max)
