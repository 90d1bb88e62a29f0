import numpy as np
import pytest
import scipy.linalg

from afomrestart import ConfigurationError, SolveSettings, restart_adaptive
from afomrestart.problem import evaluate, validate_certificate
from afomrestart.restart import afom_with_exit
from afomrestart.suite import (GeneratorSpec, active_set_enumerate, batch, box_qp_enumerate,
                               box_qp_kkt_residual, condense_mpc, generate,
                               initial_point_with_gap, riccati_terminal, spring_mass_model)


def test_qp_eigenvalues_and_certificate():
    g = generate(GeneratorSpec("qp", n=2, kappa=100, seed=42))
    H = g.problem.params["H"]
    np.testing.assert_allclose(np.linalg.eigvalsh(H), [1.0, 100.0], rtol=1e-12)
    np.testing.assert_allclose(g.certificate.optimal_point, -np.linalg.solve(H, g.problem.params["c"]))
    assert g.qfg.mu == pytest.approx(1.0)
    assert validate_certificate(g.problem, g.certificate)


def test_boxqp_scalar_clipped_optimum():
    x, val = box_qp_enumerate(np.eye(1), [-1.0], None, [0.3])
    assert x[0] == pytest.approx(0.3) and val == pytest.approx(-0.255)


@pytest.mark.parametrize("family,n", [("qp", 7), ("boxqp", 5), ("boxqp", 14), ("lasso", 8),
                                      ("mpc-springs", 0)])
def test_certificates_validate(family, n):
    spec = GeneratorSpec(family, n=max(n, 1), kappa=1e3, seed=5)
    g = generate(spec)
    assert validate_certificate(g.primal_objective, g.certificate)
    if family != "qp" and family != "lasso":
        H, c = g.problem.H, g.problem.c
        lb, ub = g.primal_objective.params["lb"], g.primal_objective.params["ub"]
        assert box_qp_kkt_residual(H, c, lb, ub, g.certificate.optimal_point) <= 1e-8


def test_numerical_flag():
    assert generate(GeneratorSpec("boxqp", n=14, seed=1)).certificate.numerical
    assert not generate(GeneratorSpec("boxqp", n=6, seed=1)).certificate.numerical
    g = generate(GeneratorSpec("lasso", n=6, seed=1))
    assert g.certificate.numerical and g.qfg is None and g.certificate.projection is None


def test_lasso_reference_is_optimal():
    g = generate(GeneratorSpec("lasso", n=10, kappa=50, seed=2))
    A, b, w = (g.problem.params[k] for k in ("A", "b", "weight"))
    x = g.certificate.optimal_point
    corr = A.T @ (A @ x - b)
    on = x != 0
    np.testing.assert_allclose(corr[on], -w * np.sign(x[on]), atol=1e-9)
    assert np.all(np.abs(corr[~on]) <= w * (1 + 1e-9))


def test_mpc_hessian_positive_definite():
    g = generate(GeneratorSpec("mpc-springs", seed=0))
    assert g.problem.H.shape == (20, 20)
    scipy.linalg.cholesky(g.problem.H)
    assert "jacobi-preconditioned dual" in g.notes


def test_mpc_horizon_two_matches_enumeration():
    g = generate(GeneratorSpec("mpc-springs", horizon=2, seed=3, state=[4, 0, 4, 0.5, 0, -0.5]))
    H, c = g.problem.H, g.problem.c
    lb = -0.5 * np.ones(4)
    G = np.vstack([np.eye(4), -np.eye(4)])
    h = np.concatenate([-lb, -lb])
    x_enum, f_enum = active_set_enumerate(H, c, G, h)
    assert np.any(np.isclose(np.abs(x_enum), 0.5))  # the bounds matter for this state
    eng = g.engine()
    tr = restart_adaptive(eng, g.default_start(), SolveSettings(epsilon=1e-15))
    u = eng.primal(tr.z[-1])
    assert np.linalg.norm(u - x_enum) <= 1e-6 * max(1.0, np.linalg.norm(x_enum))
    np.testing.assert_allclose(g.certificate.optimal_point, x_enum, atol=1e-9)


def test_riccati_matches_scipy():
    A, B = spring_mass_model()
    Q, R = np.eye(6), 0.1 * np.eye(2)
    P = riccati_terminal(A, B, Q, R)
    np.testing.assert_allclose(P, scipy.linalg.solve_discrete_are(A, B, Q, R), rtol=1e-8, atol=1e-8)


def test_condensed_cost_matches_simulation():
    A, B = spring_mass_model()
    Q, R, T = np.eye(6), 0.1 * np.eye(2), 3 * np.eye(6)
    H, F = condense_mpc(A, B, Q, R, T, 4)
    rng = np.random.default_rng(0)
    x0, u = rng.standard_normal(6), rng.standard_normal(8)
    x, cost = x0, 0.0
    for i in range(4):
        ui = u[2 * i:2 * i + 2]
        if i > 0:
            cost += 0.5 * x @ Q @ x
        cost += 0.5 * ui @ R @ ui
        x = A @ x + B @ ui
    cost += 0.5 * x @ T @ x
    # the x0 term is constant in u and omitted from the condensed form
    x0_const = 0.5 * x0 @ Q @ x0 * 0
    pred = 0.5 * u @ H @ u + (F @ x0) @ u
    X = [x0]
    for i in range(4):
        X.append(A @ X[-1])
    free = sum(0.5 * X[i] @ Q @ X[i] for i in range(1, 4)) + 0.5 * X[4] @ T @ X[4]
    assert pred + free + x0_const == pytest.approx(cost, rel=1e-10)


def test_uncontrollable_model_rejected():
    with pytest.raises(ConfigurationError):
        spring_mass_model(spring=0.0)


@pytest.mark.parametrize("kw", [dict(kappa=0.5), dict(horizon=0), dict(family="sdp"), dict(n=0)])
def test_spec_validation(kw):
    with pytest.raises(ConfigurationError):
        GeneratorSpec(**{"family": "qp", **kw})


def test_spec_round_trip():
    spec = GeneratorSpec("mpc-springs", horizon=5, seed=9)
    assert GeneratorSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ConfigurationError):
        GeneratorSpec.from_dict({"family": "qp", "colour": 1})


@pytest.mark.parametrize("family", ["qp", "boxqp", "mpc-springs"])
def test_batch_determinism(family):
    spec = GeneratorSpec(family, n=4, seed=123)
    a, b = batch(spec, 3), batch(spec, 3)
    for (ga, xa), (gb, xb) in zip(a, b):
        np.testing.assert_array_equal(xa, xb)
        np.testing.assert_array_equal(ga.certificate.optimal_point, gb.certificate.optimal_point)


def test_batch_rejects_empty():
    with pytest.raises(ConfigurationError):
        batch(GeneratorSpec("qp"), 0)


def test_mpc_positions_in_range():
    for g, _ in batch(GeneratorSpec("mpc-springs", seed=7), 10):
        pos = np.asarray(g.spec.state[:3])
        vel = np.asarray(g.spec.state[3:])
        assert np.all((0 <= pos) & (pos <= 4)) and np.all(np.abs(vel) <= 0.5)


def test_initial_gap_on_ill_conditioned(ill_quadratic):
    f, cert, _ = ill_quadratic
    x0 = initial_point_with_gap(f, cert, [0.3, -1.0], 50.5)
    assert abs(evaluate(f, x0) - 50.5) <= 50.5e-6


def test_batch_initial_gap():
    for g, x0 in batch(GeneratorSpec("qp", n=5, kappa=10, seed=1, initial_gap=50.5), 4):
        assert abs(evaluate(g.problem, x0) - g.certificate.optimal_value - 50.5) <= 50.5e-6


def test_isotropic_qp_one_inner_call():
    g = generate(GeneratorSpec("qp", n=6, kappa=1, seed=4))
    eng = g.engine()
    run = afom_with_exit(eng, np.full(6, 5.0), 1.0)
    assert run.m <= 2
    assert run.f_z == pytest.approx(g.certificate.optimal_value, abs=g.certificate.tolerance)


def test_mpc_primal_respects_bounds():
    g, z0 = batch(GeneratorSpec("mpc-springs", seed=2), 1)[0]
    eng = g.engine()
    settings = SolveSettings(mode="distance", distance=g.distance(eng))
    tr = restart_adaptive(eng, z0, settings)
    u = eng.primal(tr.final_point)
    assert np.all(np.abs(u) <= 0.5 + 1e-9)
    assert g.distance(eng)(tr.final_point) <= 1e-5
