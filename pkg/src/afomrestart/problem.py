"""Composite objectives ``f = h + psi`` and optimality certificates.

An objective is a bundle of oracles: value and gradient of the smooth part
``h``, the Lipschitz constant of that gradient, the proximal map of the
nonsmooth part ``psi`` and its value (``math.inf`` outside ``dom f``).
Certificates attach a known optimal value / point and, when the problem has
one, the quadratic functional growth (QFG) constant on a level set.

Norms are Euclidean throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateInputError, InputError, UnsupportedQueryError

__all__ = [
    "CompositeObjective",
    "OptimumCertificate",
    "QfgCertificate",
    "QfgReport",
    "certificate_tolerance",
    "evaluate",
    "lasso",
    "level_set_membership",
    "quadratic",
    "soft_threshold",
    "validate_certificate",
    "verify_qfg",
]

Point = np.ndarray


def certificate_tolerance(f_star: float) -> float:
    """Hybrid relative/absolute tolerance used for every check against ``f*``."""
    return 1e-9 * (1.0 + abs(f_star))


@dataclass(frozen=True)
class CompositeObjective:
    """Oracle bundle for ``f = h + psi`` on ``R^n``.

    ``params`` keeps the data the oracles were built from so that the
    instance can be serialized; it is empty for hand-assembled objectives.
    """

    dimension: int
    smooth_value: Callable[[Point], float]
    smooth_gradient: Callable[[Point], Point]
    smoothness_constant: float
    prox: Callable[[Point, float], Point]
    nonsmooth_value: Callable[[Point], float]
    name: str = "composite"
    params: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise InputError(f"dimension must be positive, got {self.dimension}")

    def check_point(self, x) -> Point:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise InputError(
                f"point has shape {x.shape}, expected ({self.dimension},)")
        return x

    def __call__(self, x) -> float:
        return evaluate(self, x)


@dataclass(frozen=True)
class OptimumCertificate:
    """Known optimal value ``f*`` and a representative optimal point.

    ``projection`` maps a point to its closest optimal point; it is only
    supplied when the optimal set is known analytically.  ``numerical`` marks
    certificates obtained from a high-accuracy reference run rather than by
    construction, with ``accuracy`` the tag of that run.
    """

    optimal_value: float
    optimal_point: Point
    projection: Optional[Callable[[Point], Point]] = None
    numerical: bool = False
    accuracy: float = 0.0

    @property
    def tolerance(self) -> float:
        tol = certificate_tolerance(self.optimal_value)
        if self.numerical:
            tol = max(tol, 1e-6 * (1.0 + abs(self.optimal_value)))
        return tol

    @classmethod
    def unique(cls, objective: CompositeObjective, x_star, numerical=False, accuracy=0.0):
        """Certificate for a problem whose optimum ``x_star`` is unique."""
        x_star = np.array(x_star, dtype=float)
        x_star.setflags(write=False)
        return cls(
            optimal_value=evaluate(objective, x_star),
            optimal_point=x_star,
            projection=lambda x: x_star,
            numerical=numerical,
            accuracy=accuracy,
        )


@dataclass(frozen=True)
class QfgCertificate:
    """QFG constant ``mu`` valid on the level set ``V_f(level)``."""

    level: float
    mu: float

    def __post_init__(self):
        if not (self.level > 0 and self.mu > 0):
            raise InputError("QFG level and mu must be positive")


def evaluate(objective: CompositeObjective, x) -> float:
    """``f(x) = h(x) + psi(x)``; ``math.inf`` when ``x`` is outside ``dom f``."""
    x = objective.check_point(x)
    psi = float(objective.nonsmooth_value(x))
    if psi == math.inf:
        return math.inf
    return float(objective.smooth_value(x)) + psi


def level_set_membership(objective, certificate, x, rho) -> bool:
    """True iff ``f(x) - f* <= rho``."""
    if certificate is None:
        raise UnsupportedQueryError("level-set membership needs an optimum certificate")
    fx = evaluate(objective, x)
    if fx == math.inf:
        return False
    return fx - certificate.optimal_value <= rho


def validate_certificate(objective, certificate) -> bool:
    """Check that the certificate's point (and projection, if any) attain ``f*``."""
    f_star = certificate.optimal_value
    tol = certificate.tolerance
    if abs(evaluate(objective, certificate.optimal_point) - f_star) > tol:
        return False
    if certificate.projection is not None:
        probe = certificate.optimal_point + 1.0
        if abs(evaluate(objective, certificate.projection(probe)) - f_star) > tol:
            return False
    return True


@dataclass
class QfgReport:
    ratios: list
    flagged: list
    skipped: int
    mu: float

    @property
    def passed(self) -> bool:
        return not self.flagged

    @property
    def min_ratio(self) -> float:
        return min(self.ratios)


def verify_qfg(objective, opt: OptimumCertificate, qfg: QfgCertificate,
               samples: Sequence) -> QfgReport:
    """Confront the QFG inequality with sampled points of ``V_f(qfg.level)``.

    For each sample the ratio ``(f(x) - f*) / (0.5 * ||x - proj(x)||^2)`` is
    recorded; samples outside the level set, or sitting on the optimal set,
    are skipped.  A ratio below ``mu`` (up to a relative 1e-9 roundoff
    allowance) is flagged.
    """
    if opt.projection is None:
        raise UnsupportedQueryError("QFG verification needs the projection onto the optimal set")
    f_star = opt.optimal_value
    ratios, flagged, skipped = [], [], 0
    for i, x in enumerate(samples):
        x = objective.check_point(x)
        gap = evaluate(objective, x) - f_star
        if not gap <= qfg.level:
            skipped += 1
            continue
        dist2 = float(np.sum((x - opt.projection(x)) ** 2))
        if dist2 == 0.0:
            skipped += 1
            continue
        ratio = gap / (0.5 * dist2)
        ratios.append(ratio)
        if ratio < qfg.mu * (1.0 - 1e-9):
            flagged.append(i)
    if not ratios:
        raise DegenerateInputError("no sample fell inside the level set")
    return QfgReport(ratios=ratios, flagged=flagged, skipped=skipped, mu=qfg.mu)


def _box_prox(lb, ub):
    if lb is None and ub is None:
        return lambda x, step: np.array(x, dtype=float)
    lo = -np.inf if lb is None else lb
    hi = np.inf if ub is None else ub
    return lambda x, step: np.clip(x, lo, hi)


def _box_indicator(lb, ub):
    if lb is None and ub is None:
        return lambda x: 0.0

    def indicator(x):
        if lb is not None and np.any(x < lb):
            return math.inf
        if ub is not None and np.any(x > ub):
            return math.inf
        return 0.0
    return indicator


def quadratic(H, c=None, lb=None, ub=None, offset=0.0, smoothness=None,
              name="quadratic") -> CompositeObjective:
    """``0.5 x'Hx + c'x + offset`` plus the indicator of the box ``[lb, ub]``.

    ``smoothness`` overrides the Lipschitz constant (defaults to the largest
    eigenvalue of ``H``); bounds may be scalars or arrays, ``None`` meaning
    unbounded on that side.
    """
    H = np.atleast_2d(np.array(H, dtype=float))
    n = H.shape[0]
    if H.shape != (n, n):
        raise InputError("H must be square")
    if not np.allclose(H, H.T, rtol=0, atol=1e-12 * max(1.0, np.abs(H).max())):
        raise InputError("H must be symmetric")
    c = np.zeros(n) if c is None else np.array(c, dtype=float).reshape(n)
    lb = None if lb is None else np.broadcast_to(np.asarray(lb, dtype=float), (n,)).copy()
    ub = None if ub is None else np.broadcast_to(np.asarray(ub, dtype=float), (n,)).copy()
    if lb is not None and ub is not None and np.any(lb > ub):
        raise InputError("empty box: lb > ub")
    eig = np.linalg.eigvalsh(H)
    if eig[0] < -1e-12 * max(1.0, abs(eig[-1])):
        raise InputError(f"H is not positive semidefinite (smallest eigenvalue {eig[0]:.3g})")
    if smoothness is None:
        smoothness = float(eig[-1])
    offset = float(offset)

    def value(x):
        return 0.5 * float(x @ (H @ x)) + float(c @ x) + offset

    def gradient(x):
        return H @ x + c

    return CompositeObjective(
        dimension=n,
        smooth_value=value,
        smooth_gradient=gradient,
        smoothness_constant=float(smoothness),
        prox=_box_prox(lb, ub),
        nonsmooth_value=_box_indicator(lb, ub),
        name=name,
        params={"kind": "quadratic", "H": H, "c": c, "lb": lb, "ub": ub,
                "offset": offset, "smoothness": float(smoothness)},
    )


def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso(A, b, weight, name="lasso") -> CompositeObjective:
    """``0.5 ||Ax - b||^2 + weight * ||x||_1``."""
    A = np.atleast_2d(np.array(A, dtype=float))
    b = np.array(b, dtype=float).reshape(A.shape[0])
    weight = float(weight)
    if weight < 0:
        raise InputError("lasso weight must be nonnegative")
    L = float(np.linalg.norm(A, 2) ** 2)

    def value(x):
        r = A @ x - b
        return 0.5 * float(r @ r)

    return CompositeObjective(
        dimension=A.shape[1],
        smooth_value=value,
        smooth_gradient=lambda x: A.T @ (A @ x - b),
        smoothness_constant=L,
        prox=lambda x, step: soft_threshold(x, weight * step),
        nonsmooth_value=lambda x: weight * float(np.abs(x).sum()),
        name=name,
        params={"kind": "lasso", "A": A, "b": b, "weight": weight},
    )
