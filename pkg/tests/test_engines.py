import numpy as np
import pytest

from afomrestart import (ConfigurationError, DegenerateInputError, DualQpEngine, DualQpProblem,
                         FistaEngine, OptimumCertificate, check_engine_rates, evaluate, quadratic)
from afomrestart.bounds import nbar_rho
from afomrestart.errors import UnsupportedQueryError
from afomrestart.suite import GeneratorSpec, active_set_enumerate, box_qp_enumerate, generate

# textbook FISTA written out with Python scalars, run once and frozen:
# 0.5 x' diag(1, 100) x from (1, 1), 50 steps
FISTA_GAP_K50 = 0.005712914341499505


def test_single_step_hits_optimum_of_unit_quadratic(scalar_quadratic):
    eng = FistaEngine(scalar_quadratic[0])
    assert eng.iterate([1.0], 1)[0] == 0.0


def test_gradient_map_reduces_to_gradient(ill_engine):
    np.testing.assert_allclose(ill_engine.gradient_map(np.array([1.0, 0.0])), [1.0, 0.0], atol=1e-12)


def test_constants(ill_engine):
    assert ill_engine.L_f == 100.0 and ill_engine.a_f == 200.0


def test_fista_matches_scalar_reference(ill_engine):
    x = ill_engine.iterate([1.0, 1.0], 50)
    gap = evaluate(ill_engine.f, x)
    assert gap == pytest.approx(FISTA_GAP_K50, rel=1e-10)
    assert gap < 200.0 / 51**2 * 2.0


def test_nonpositive_smoothness_rejected():
    f = quadratic(np.eye(2), smoothness=0.0)
    with pytest.raises(ConfigurationError):
        FistaEngine(f)


def test_iterates_are_reproducible(ill_engine):
    a = [x.copy() for _, x in zip(range(30), ill_engine.start([0.3, -2.0]))]
    b = [ill_engine.iterate([0.3, -2.0], k) for k in range(1, 31)]
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)


def test_gradient_map_vanishes_at_optimum():
    f = quadratic(np.diag([2.0, 5.0]), [-1.0, 3.0], lb=[0.0, 0.0])
    x, _ = box_qp_enumerate(np.diag([2.0, 5.0]), [-1.0, 3.0], lb=[0.0, 0.0])
    eng = FistaEngine(f)
    assert np.linalg.norm(eng.gradient_map(x)) <= 1e-9
    assert np.linalg.norm(eng.gradient_map(x + [0.1, 0.0])) > 1e-3


def test_dual_engine_scalar_kkt():
    prob = DualQpProblem.from_box([[1.0]], [0.0], lb=[1.0])
    eng = DualQpEngine(prob)
    cert = eng.dual_certificate(OptimumCertificate(0.5, np.array([1.0])))
    assert cert.optimal_point[0] == pytest.approx(1.0)
    assert eng.primal(np.array([1.0]))[0] == pytest.approx(1.0)
    lam = eng.iterate(np.zeros(1), 50)
    assert lam[0] == pytest.approx(1.0, abs=1e-9)


def test_dual_engine_rejects_unconstrained():
    with pytest.raises(DegenerateInputError):
        DualQpProblem.from_box(np.eye(2), [1.0, 1.0])


def test_dual_engine_rejects_indefinite():
    with pytest.raises(ConfigurationError):
        DualQpProblem.from_box(np.diag([1.0, -1.0]), [0.0, 0.0], lb=0.0, ub=1.0)


def test_dual_engine_rejects_infeasible():
    with pytest.raises(ConfigurationError):
        DualQpProblem(np.eye(1), [0.0], G=[[1.0], [-1.0]], h=[0.0, -1.0])
    with pytest.raises(ConfigurationError):
        DualQpProblem.from_box(np.eye(1), [0.0], lb=1.0, ub=0.0)


def test_dual_engine_box_2d():
    H, c = np.diag([2.0, 2.0]), np.array([-2.0, -2.0])
    x_enum, _ = box_qp_enumerate(H, c, 0.0, 0.5)
    np.testing.assert_allclose(x_enum, [0.5, 0.5])
    eng = DualQpEngine(DualQpProblem.from_box(H, c, 0.0, 0.5))
    assert eng.L_f == pytest.approx(2.0 / 2.0)
    x = eng.primal(eng.iterate(np.zeros(4), 200))
    assert np.linalg.norm(x - x_enum) <= 1e-5


def test_sigma_f():
    prob = DualQpProblem.from_box(np.diag([3.0, 7.0]), [0.0, 0.0], ub=1.0)
    assert prob.sigma_f == pytest.approx(3.0, abs=1e-8)


@pytest.mark.parametrize("seed", range(8))
def test_dual_primal_consistency_with_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    p = int(rng.integers(1, 7))
    M = rng.standard_normal((n, n))
    H = M @ M.T + 0.5 * np.eye(n)
    c = rng.standard_normal(n)
    G = rng.standard_normal((p, n))
    h = G @ rng.standard_normal(n) + rng.uniform(0.0, 0.5, p)  # feasible by construction
    x_enum, _ = active_set_enumerate(H, c, G, h)
    eng = DualQpEngine(DualQpProblem(H, c, G, h))
    from afomrestart import SolveSettings, restart_adaptive
    trace = restart_adaptive(eng, np.zeros(p), SolveSettings(epsilon=1e-14, max_total_iterations=200_000))
    x = eng.primal(trace.z[-1])
    assert np.linalg.norm(x - x_enum) <= 1e-5 * max(1.0, np.linalg.norm(x_enum))


def test_check_engine_rates_scalar(scalar_quadratic):
    f, cert = scalar_quadratic
    rep = check_engine_rates(FistaEngine(f), cert, [np.array([1.0])], 10)
    assert rep.passed and rep.worst_envelope_slack > 0


def test_check_engine_rates_detects_understated_af(ill_quadratic):
    f, cert, _ = ill_quadratic
    eng = FistaEngine(f, a_f=f.smoothness_constant / 10)
    rep = check_engine_rates(eng, cert, [np.array([1.0, 1.0])], 500)
    assert not rep.envelope_ok


def test_check_engine_rates_at_optimum(ill_quadratic):
    f, cert, _ = ill_quadratic
    rep = check_engine_rates(FistaEngine(f), cert, [np.zeros(2)], 20)
    assert rep.passed
    assert rep.worst_decrease_slack == 0.0 and rep.worst_envelope_slack == 0.0


def test_check_engine_rates_needs_projection(ill_quadratic):
    f, cert, _ = ill_quadratic
    with pytest.raises(UnsupportedQueryError):
        check_engine_rates(FistaEngine(f), OptimumCertificate(0.0, np.zeros(2)), [np.ones(2)], 5)


@pytest.mark.parametrize("family,n", [("qp", 5), ("qp", 20), ("boxqp", 4)])
def test_envelope_and_decrease_on_generated(family, n):
    g = generate(GeneratorSpec(family, n=n, kappa=1e3, seed=11))
    eng = g.engine()
    cert = g.engine_certificate(eng)
    rng = np.random.default_rng(2)
    dim = eng.dimension if not g.is_dual else g.problem.G.shape[0]
    starts = [rng.standard_normal(dim) * 3 for _ in range(100)]
    if g.is_dual:
        starts = [np.abs(s) for s in starts]
    rep = check_engine_rates(eng, cert, starts[:3], 500)
    assert rep.passed
    rep = check_engine_rates(eng, cert, starts, 1)
    assert rep.decrease_ok


def test_property1_rate_on_qp():
    g = generate(GeneratorSpec("qp", n=6, kappa=50, seed=4))
    eng = g.engine()
    nbar = nbar_rho(eng.a_f, g.qfg.mu)
    x0 = np.random.default_rng(0).standard_normal(6) * 4
    f0 = eng.objective(x0) - g.certificate.optimal_value
    tol = g.certificate.tolerance
    for k, x in enumerate(eng.start(x0), start=1):
        gap = eng.objective(x) - g.certificate.optimal_value
        assert gap <= (nbar / (k + 1)) ** 2 * f0 + tol
        if k == 300:
            break
