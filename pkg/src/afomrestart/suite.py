"""Problem families with optimum certificates.

Families
--------
qp
    ``0.5 x'Hx + c'x`` with ``H = Q diag(lambda) Q'``, eigenvalues log-spaced
    in ``[1, kappa]``; exact certificate by a linear solve, QFG constant 1.
boxqp
    Same Hessian with a symmetric box, solved through the dual engine;
    certificate by active-set enumeration for ``n <= 10``.
lasso
    Least squares plus an l1 term; numerical certificate, no QFG constant.
mpc-springs
    Condensed MPC for three masses on springs between two walls, forces on
    the outer masses, box input constraints, Riccati terminal weight.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np
import scipy.linalg
import scipy.optimize

from .engines import AfomEngine, DualQpEngine, DualQpProblem, FistaEngine
from .errors import ConfigurationError, InputError
from .problem import (CompositeObjective, OptimumCertificate, QfgCertificate, evaluate,
                      lasso, quadratic)

__all__ = [
    "FAMILIES",
    "Generated",
    "GeneratorSpec",
    "active_set_enumerate",
    "batch",
    "box_qp_enumerate",
    "box_qp_kkt_residual",
    "box_qp_reference",
    "condense_mpc",
    "generate",
    "initial_point_with_gap",
    "riccati_terminal",
    "spring_mass_model",
]

FAMILIES = ("qp", "boxqp", "lasso", "mpc-springs")
REFERENCE_ACCURACY = 1e-12


@dataclass
class GeneratorSpec:
    family: str = "qp"
    n: int = 10
    kappa: float = 100.0
    seed: int = 0
    box_scale: float = 0.5
    lasso_weight: float = 0.1
    lasso_rows: Optional[int] = None
    horizon: int = 10
    mass: float = 1.0
    spring: float = 2.0
    damping: float = 0.0
    dt: float = 0.2
    u_max: float = 0.5
    state_weight: float = 1.0
    input_weight: float = 0.1
    precondition: Optional[bool] = None
    state: Optional[List[float]] = None
    initial_gap: float = 10.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.kappa < 1:
            raise ConfigurationError("condition number kappa must be >= 1")
        if self.n < 1:
            raise ConfigurationError("dimension must be positive")
        if self.horizon < 1:
            raise ConfigurationError("horizon must be positive")
        if not (0 <= self.seed < 2**64):
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.family == "mpc-springs" and not self.u_max > 0:
            raise ConfigurationError("input bound must be positive")

    @property
    def preconditioned(self) -> bool:
        if self.precondition is None:
            return self.family == "mpc-springs"
        return bool(self.precondition)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown generator fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Generated:
    """A generated instance.

    ``problem`` is a :class:`CompositeObjective` (qp, lasso) or a
    :class:`DualQpProblem` (boxqp, mpc-springs); ``certificate`` always
    refers to the primal problem.  ``qfg`` is only emitted for the engine's
    own objective when its growth constant is known.
    """

    spec: GeneratorSpec
    problem: object
    certificate: OptimumCertificate
    qfg: Optional[QfgCertificate] = None
    primal_objective: Optional[CompositeObjective] = None
    notes: List[str] = field(default_factory=list)

    @property
    def is_dual(self) -> bool:
        return isinstance(self.problem, DualQpProblem)

    def engine(self, a_f: Optional[float] = None) -> AfomEngine:
        if self.is_dual:
            return DualQpEngine(self.problem, a_f=a_f)
        return FistaEngine(self.problem, a_f=a_f)

    def engine_certificate(self, engine: AfomEngine) -> OptimumCertificate:
        """Certificate expressed in the engine's iterate space."""
        if isinstance(engine, DualQpEngine):
            return engine.dual_certificate(self.certificate)
        return self.certificate

    def distance(self, engine: AfomEngine):
        """``x -> ||primal(x) - x*|| / ||x*||`` (absolute when ``x* = 0``)."""
        x_star = np.asarray(self.certificate.optimal_point, dtype=float)
        scale = float(np.linalg.norm(x_star)) or 1.0

        def rel_distance(x):
            return float(np.linalg.norm(engine.primal(x) - x_star)) / scale
        return rel_distance

    def default_start(self) -> np.ndarray:
        if self.is_dual:
            return np.zeros(self.problem.G.shape[0])
        return np.zeros(self.problem.dimension)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(int(seed))


def _spd(n, kappa, rng):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    eig = np.logspace(0.0, math.log10(kappa), n) if n > 1 else np.ones(1)
    H = (Q * eig) @ Q.T
    return 0.5 * (H + H.T), eig


def box_qp_kkt_residual(H, c, lb, ub, x) -> float:
    """Largest violation of the KKT conditions of ``min 0.5x'Hx + c'x, lb <= x <= ub``."""
    H = np.atleast_2d(H)
    x = np.asarray(x, float)
    lb = np.broadcast_to(-np.inf if lb is None else lb, x.shape)
    ub = np.broadcast_to(np.inf if ub is None else ub, x.shape)
    r = H @ x + c
    # projected-gradient residual: zero exactly at the optimum
    proj = np.clip(x - r, lb, ub)
    feas = max(0.0, float(np.max(lb - x)), float(np.max(x - ub)))
    return max(feas, float(np.max(np.abs(proj - x))))


def box_qp_enumerate(H, c, lb=None, ub=None):
    """Exact optimum of a box QP by enumerating the ``3^n`` activity patterns.

    Each pattern fixes every coordinate to free, lower or upper; the free
    block is solved from the stationarity equations and the pattern is kept
    when it is primal feasible with correctly signed multipliers.
    """
    H = np.atleast_2d(np.array(H, dtype=float))
    n = H.shape[0]
    if n > 12:
        raise InputError("enumeration is limited to n <= 12")
    c = np.asarray(c, float).reshape(n)
    lb = np.full(n, -np.inf) if lb is None else np.broadcast_to(np.asarray(lb, float), (n,))
    ub = np.full(n, np.inf) if ub is None else np.broadcast_to(np.asarray(ub, float), (n,))
    tol = 1e-10 * (1.0 + np.abs(H).max() + np.abs(c).max())
    best, best_val = None, math.inf
    for pattern in itertools.product((0, 1, 2), repeat=n):
        pattern = np.array(pattern)
        if np.any((pattern == 1) & ~np.isfinite(lb)) or np.any((pattern == 2) & ~np.isfinite(ub)):
            continue
        x = np.zeros(n)
        x[pattern == 1] = lb[pattern == 1]
        x[pattern == 2] = ub[pattern == 2]
        F = pattern == 0
        if F.any():
            rhs = -(c[F] + H[np.ix_(F, ~F)] @ x[~F])
            x[F] = np.linalg.solve(H[np.ix_(F, F)], rhs)
        if np.any(x < lb - tol) or np.any(x > ub + tol):
            continue
        r = H @ x + c
        if np.any(r[pattern == 1] < -tol) or np.any(r[pattern == 2] > tol):
            continue
        val = 0.5 * x @ H @ x + c @ x
        if val < best_val:
            best, best_val = x, val
    if best is None:
        raise ConfigurationError("no KKT point found; is the box empty?")
    return best, float(best_val)


def active_set_enumerate(H, c, G, h):
    """Exact optimum of ``min 0.5x'Hx + c'x s.t. Gx <= h`` by enumerating
    candidate active sets of size ``<= n`` (small instances only)."""
    H = np.atleast_2d(np.array(H, float))
    n = H.shape[0]
    c = np.asarray(c, float).reshape(n)
    G = np.atleast_2d(np.array(G, float)).reshape(-1, n)
    h = np.asarray(h, float).reshape(-1)
    p = G.shape[0]
    if p > 12:
        raise InputError("enumeration is limited to 12 constraints")
    tol = 1e-9 * (1.0 + np.abs(H).max() + np.abs(c).max() + np.abs(h).max())
    best, best_val = None, math.inf
    for size in range(0, min(n, p) + 1):
        for act in itertools.combinations(range(p), size):
            act = list(act)
            GA = G[act]
            K = np.block([[H, GA.T], [GA, np.zeros((size, size))]])
            rhs = np.concatenate([-c, h[act]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:n], sol[n:]
            if np.any(G @ x > h + tol) or np.any(lam < -tol):
                continue
            val = 0.5 * x @ H @ x + c @ x
            if val < best_val:
                best, best_val = x, float(val)
    if best is None:
        raise ConfigurationError("no KKT point found; constraints may be infeasible")
    return best, best_val


def _restarted_reference(objective: CompositeObjective, x0):
    """Run the adaptive scheme until the outer decrease stalls at roundoff level."""
    # local import: restart depends on engines, suite must stay importable first
    from .restart import SolveSettings, restart_adaptive
    engine = FistaEngine(objective)
    scale = 1.0 + abs(evaluate(objective, x0))
    settings = SolveSettings(epsilon=1e-16 * scale, max_total_iterations=2_000_000)
    try:
        trace = restart_adaptive(engine, x0, settings)
    except Exception as exc:  # CapExceeded: keep the best point reached
        trace = getattr(exc, "partial", None)
        if trace is None:
            raise
    return trace.z[-1]


def box_qp_reference(H, c, lb, ub):
    """High-accuracy optimum of a box QP: restarted FISTA on the primal, then
    an active-set polish accepted only if it improves the KKT residual."""
    H = np.atleast_2d(np.array(H, float))
    n = H.shape[0]
    c = np.asarray(c, float).reshape(n)
    obj = quadratic(H, c, lb=lb, ub=ub)
    x = _restarted_reference(obj, np.clip(np.zeros(n), lb, ub))
    lo = np.broadcast_to(lb, (n,))
    hi = np.broadcast_to(ub, (n,))
    delta = 1e-8 * (1.0 + np.abs(x))
    at_lo, at_hi = x <= lo + delta, x >= hi - delta
    free = ~(at_lo | at_hi)
    xp = x.copy()
    xp[at_lo], xp[at_hi] = lo[at_lo], hi[at_hi]
    if free.any():
        xp[free] = np.linalg.solve(H[np.ix_(free, free)], -(c[free] + H[np.ix_(free, ~free)] @ xp[~free]))
    if box_qp_kkt_residual(H, c, lb, ub, xp) <= box_qp_kkt_residual(H, c, lb, ub, x):
        x = xp
    return x, 0.5 * float(x @ H @ x) + float(c @ x)


def _lasso_reference(A, b, weight):
    obj = lasso(A, b, weight)
    x = _restarted_reference(obj, np.zeros(A.shape[1]))
    support = np.abs(x) > 1e-9 * (1.0 + np.abs(x).max())
    if support.any():
        AS = A[:, support]
        sgn = np.sign(x[support])
        xs = np.linalg.lstsq(AS.T @ AS, AS.T @ b - weight * sgn, rcond=None)[0]
        cand = np.zeros_like(x)
        cand[support] = xs
        corr = A.T @ (A @ cand - b)
        ok = (np.all(np.sign(xs) == sgn)
              and np.all(np.abs(corr[~support]) <= weight * (1 + 1e-9)))
        if ok and evaluate(obj, cand) <= evaluate(obj, x):
            x = cand
    return obj, x


def spring_mass_model(mass=1.0, spring=2.0, damping=0.0, dt=0.2):
    """Discrete (zero-order hold) model of three masses between two walls.

    State ``(p1, p2, p3, v1, v2, v3)``; inputs are forces on masses 1 and 3.
    """
    if not (mass > 0 and dt > 0) or spring < 0 or damping < 0:
        raise ConfigurationError("mass and sampling period must be positive; spring and damping nonnegative")
    K = spring * (2.0 * np.eye(3) - np.eye(3, k=1) - np.eye(3, k=-1))
    Ac = np.block([[np.zeros((3, 3)), np.eye(3)],
                   [-K / mass, -(damping / mass) * np.eye(3)]])
    Bf = np.zeros((3, 2))
    Bf[0, 0] = Bf[2, 1] = 1.0
    Bc = np.vstack([np.zeros((3, 2)), Bf / mass])
    M = np.zeros((8, 8))
    M[:6, :6], M[:6, 6:] = Ac, Bc
    E = scipy.linalg.expm(M * dt)
    A, B = E[:6, :6], E[:6, 6:]
    ctrb = np.hstack([np.linalg.matrix_power(A, i) @ B for i in range(6)])
    if np.linalg.matrix_rank(ctrb) < 6:
        raise ConfigurationError("spring-mass parameters give an uncontrollable system")
    return A, B


def riccati_terminal(A, B, Q, R, tol=1e-12, max_iter=100_000):
    """Fixed point of the Riccati recursion ``P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA``."""
    P = np.array(Q, dtype=float)
    for _ in range(max_iter):
        BtP = B.T @ P
        P_next = Q + A.T @ P @ A - (BtP @ A).T @ np.linalg.solve(R + BtP @ B, BtP @ A)
        P_next = 0.5 * (P_next + P_next.T)
        if np.max(np.abs(P_next - P)) <= tol * (1.0 + np.max(np.abs(P))):
            return P_next
        P = P_next
    raise ConfigurationError("Riccati recursion did not converge")


def condense_mpc(A, B, Q, R, T, N):
    """Condensed Hessian ``H`` and state-to-linear-term map ``F`` (``c = F x0``)
    for ``0.5 sum_{i<N} (x_i'Qx_i + u_i'Ru_i) + 0.5 x_N'Tx_N``."""
    nx, nu = B.shape
    powers = [np.eye(nx)]
    for _ in range(N):
        powers.append(A @ powers[-1])
    Gamma = np.zeros((N * nx, N * nu))
    for i in range(N):
        for j in range(i + 1):
            Gamma[i * nx:(i + 1) * nx, j * nu:(j + 1) * nu] = powers[i - j] @ B
    Phi = np.vstack(powers[1:])
    Qbar = scipy.linalg.block_diag(*([Q] * (N - 1) + [T]))
    Rbar = np.kron(np.eye(N), R)
    H = Gamma.T @ Qbar @ Gamma + Rbar
    F = Gamma.T @ Qbar @ Phi
    return 0.5 * (H + H.T), F


def _mpc_matrices(spec: GeneratorSpec):
    A, B = spring_mass_model(spec.mass, spec.spring, spec.damping, spec.dt)
    Q = spec.state_weight * np.eye(6)
    R = spec.input_weight * np.eye(2)
    T = riccati_terminal(A, B, Q, R)
    return condense_mpc(A, B, Q, R, T, spec.horizon)


def _box_certificate(H, c, lb, ub):
    n = H.shape[0]
    if n <= 10:
        x, val = box_qp_enumerate(H, c, lb, ub)
        numerical = False
    else:
        x, val = box_qp_reference(H, c, lb, ub)
        numerical = True
    x.setflags(write=False)
    return OptimumCertificate(optimal_value=val, optimal_point=x, projection=lambda _: x,
                              numerical=numerical,
                              accuracy=REFERENCE_ACCURACY if numerical else 0.0)


def generate(spec: GeneratorSpec) -> Generated:
    rng = _rng(spec.seed)
    fam = spec.family
    if fam in ("qp", "boxqp"):
        H, eig = _spd(spec.n, spec.kappa, rng)
        c = rng.standard_normal(spec.n)
        x_unc = -np.linalg.solve(H, c)
        if fam == "qp":
            obj = quadratic(H, c)
            cert = OptimumCertificate.unique(obj, x_unc)
            return Generated(spec, obj, cert, QfgCertificate(math.inf, float(eig[0])), obj)
        beta = spec.box_scale * float(np.max(np.abs(x_unc)))
        lb, ub = -beta * np.ones(spec.n), beta * np.ones(spec.n)
        prob = DualQpProblem.from_box(H, c, lb, ub, precondition=spec.preconditioned)
        cert = _box_certificate(H, c, lb, ub)
        notes = ["jacobi-preconditioned dual"] if spec.preconditioned else []
        return Generated(spec, prob, cert, None, quadratic(H, c, lb=lb, ub=ub), notes)
    if fam == "lasso":
        rows = spec.lasso_rows or spec.n
        if rows < spec.n:
            raise ConfigurationError("lasso generator needs at least n rows")
        U, _ = np.linalg.qr(rng.standard_normal((rows, spec.n)))
        V, _ = np.linalg.qr(rng.standard_normal((spec.n, spec.n)))
        sig = np.sqrt(np.logspace(0.0, math.log10(spec.kappa), spec.n)) if spec.n > 1 else np.ones(1)
        A = (U * sig) @ V.T
        x_true = np.zeros(spec.n)
        k = max(1, spec.n // 4)
        x_true[rng.choice(spec.n, k, replace=False)] = rng.standard_normal(k)
        b = A @ x_true + 0.1 * rng.standard_normal(rows)
        weight = spec.lasso_weight * float(np.max(np.abs(A.T @ b)))
        obj, x_ref = _lasso_reference(A, b, weight)
        x_ref.setflags(write=False)
        cert = OptimumCertificate(evaluate(obj, x_ref), x_ref, None, True, REFERENCE_ACCURACY)
        return Generated(spec, obj, cert, None, obj)
    # mpc-springs
    H, F = _mpc_matrices(spec)
    if spec.state is not None:
        state = np.asarray(spec.state, dtype=float)
        if state.shape != (6,):
            raise ConfigurationError("mpc-springs state must have 6 entries")
    else:
        state = _sample_state(rng)
    c = F @ state
    nu = H.shape[0]
    lb, ub = -spec.u_max * np.ones(nu), spec.u_max * np.ones(nu)
    prob = DualQpProblem.from_box(H, c, lb, ub, precondition=spec.preconditioned)
    cert = _box_certificate(H, c, lb, ub)
    notes = ["jacobi-preconditioned dual"] if spec.preconditioned else []
    return Generated(spec, prob, cert, None, quadratic(H, c, lb=lb, ub=ub), notes)


def _sample_state(rng):
    pos = rng.uniform(0.0, 4.0, 3)
    vel = rng.uniform(-0.5, 0.5, 3)
    return np.concatenate([pos, vel])


def initial_point_with_gap(objective: CompositeObjective, certificate: OptimumCertificate,
                           direction, gap: float) -> np.ndarray:
    """Point ``x* + t d`` with ``f - f* = gap``, ``t`` found by bracketing and bisection."""
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    x_star = np.asarray(certificate.optimal_point, float)
    f_star = certificate.optimal_value

    def excess(t):
        return evaluate(objective, x_star + t * d) - f_star - gap

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise InputError("requested gap not reachable along this direction")
    t = scipy.optimize.brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return x_star + t * d


def batch(spec: GeneratorSpec, count: int):
    """``count`` (instance, initial point) pairs, deterministic under ``spec.seed``.

    mpc-springs instances share the model and differ in the sampled state;
    the dual engines start from zero multipliers.  Other families draw a
    fresh instance per item and place the initial point on a uniformly
    random direction at the requested initial gap.
    """
    if count < 1:
        raise ConfigurationError("batch count must be at least 1")
    out = []
    if spec.family == "mpc-springs":
        rng = _rng(spec.seed)
        base = asdict(spec)
        for _ in range(count):
            base["state"] = _sample_state(rng).tolist()
            g = generate(GeneratorSpec(**base))
            out.append((g, g.default_start()))
        return out
    children = np.random.SeedSequence(int(spec.seed)).spawn(count)
    for child in children:
        seed = int(child.generate_state(1, dtype=np.uint64)[0])
        item = GeneratorSpec(**{**asdict(spec), "seed": seed})
        g = generate(item)
        if g.is_dual:
            out.append((g, g.default_start()))
            continue
        d = np.random.default_rng(child).standard_normal(item.n)
        out.append((g, initial_point_with_gap(g.problem, g.certificate, d, spec.initial_gap)))
    return out
