import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

from activeset_id.kkt import ActiveSet, MultiplierPair, psi
from activeset_id.problem import (ErrorBounds, NoiseSpec, ProblemOracle, derive_seed, evaluate_exact,
                                  evaluate_noisy, make_parabola_problem, parabola_oracle, penalty_objective,
                                  reference_minimizer)
from activeset_id.qp import solve_reduced_kkt


def central_diff(fun, x, h=1e-6):
    cols = []
    for i in range(x.shape[0]):
        step = np.zeros_like(x)
        step[i] = h
        cols.append((np.atleast_1d(fun(x + step)) - np.atleast_1d(fun(x - step))) / (2 * h))
    return np.array(cols)  # rows are d/dx_i, so shape (n, m)


@pytest.fixture(scope="module")
def f1():
    return make_parabola_problem("f1")


@pytest.fixture(scope="module")
def f2():
    return make_parabola_problem("f2")


def test_constraints_by_hand(f1):
    ev = evaluate_exact(f1.oracle, [0.0, 0.25])
    np.testing.assert_allclose(ev.c_val, [-0.25, -0.25])
    assert evaluate_exact(f1.oracle, [0.0, 0.0]).c_val[0] == 0.0


def test_exact_evaluation_has_zero_bounds(f1):
    ev = evaluate_exact(f1.oracle, [0.1, 0.2])
    assert ev.is_exact
    assert np.all(ev.bounds.as_array() == 0)


def test_dimension_mismatch(f1):
    with pytest.raises(ValueError):
        evaluate_exact(f1.oracle, [1.0, 2.0, 3.0])


@pytest.mark.parametrize("name", ["f1", "f2"])
@given(x=st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
def test_derivatives_match_finite_differences(name, x):
    oracle = parabola_oracle(name)
    x = np.array(x)
    ev = evaluate_exact(oracle, x)
    np.testing.assert_allclose(ev.grad_f, central_diff(oracle.f, x)[:, 0], rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(ev.jac_c, central_diff(oracle.c, x), rtol=1e-6, atol=1e-6)


def test_zero_noise_is_bitwise_exact(f1):
    x = np.array([0.3, -0.2])
    assert evaluate_noisy(f1.oracle, x, NoiseSpec(0.0, 99)).same_values(evaluate_exact(f1.oracle, x))


def test_same_seed_same_draws(f1):
    x = np.array([0.3, -0.2])
    a = evaluate_noisy(f1.oracle, x, NoiseSpec(1e-2, 7))
    b = evaluate_noisy(f1.oracle, x, NoiseSpec(1e-2, 7))
    c = evaluate_noisy(f1.oracle, x, NoiseSpec(1e-2, 8))
    assert a.same_values(b)
    assert not a.same_values(c)


def test_noise_bounds_attached(f1):
    ev = evaluate_noisy(f1.oracle, [0.1, 0.1], NoiseSpec(1e-2, 1))
    b = ev.bounds
    assert b.eps_f == 1e-2
    assert b.eps_e == 0.0
    np.testing.assert_allclose([b.eps_c, b.eps_grad_f, b.eps_grad_c], [np.sqrt(2) * 1e-2, np.sqrt(2) * 1e-2, 2e-2])


def test_noise_statistics(f1):
    x = np.array([0.1, 0.2])
    exact = evaluate_exact(f1.oracle, x)
    devs = []
    for k in range(1000):
        noisy = evaluate_noisy(f1.oracle, x, NoiseSpec(1e-2, derive_seed(3, k)))
        devs.append(np.concatenate([np.ravel(a - b) for a, b in zip(noisy.arrays(), exact.arrays())]))
    devs = np.array(devs)
    assert np.max(np.abs(devs)) <= 1e-2
    se = 1e-2 / np.sqrt(3) / np.sqrt(devs.shape[0])
    assert np.all(np.abs(devs.mean(axis=0)) <= 3.5 * se)


@given(st.floats(0, 1), st.integers(-(2**63), 2**64 - 1), st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_noisy_within_bounds(level, seed, x):
    oracle = parabola_oracle("f2")
    exact = evaluate_exact(oracle, np.array(x))
    noisy = evaluate_noisy(oracle, np.array(x), NoiseSpec(level, seed))
    b = noisy.bounds
    assert abs(noisy.f_val - exact.f_val) <= b.eps_f
    assert np.linalg.norm(noisy.c_val - exact.c_val) <= b.eps_c * (1 + 1e-12)
    assert np.linalg.norm(noisy.grad_f - exact.grad_f) <= b.eps_grad_f * (1 + 1e-12)
    # inf-induced norm of an n x q matrix: max absolute row sum of its transpose
    assert np.max(np.abs(noisy.jac_c - exact.jac_c).sum(axis=0)) <= b.eps_grad_c * (1 + 1e-12)


def test_negative_level_rejected():
    with pytest.raises(ValueError):
        NoiseSpec(-1e-3, 0)
    with pytest.raises(ValueError):
        ErrorBounds(eps_c=-1.0)


def test_a_star_fixtures(f1, f2):
    assert f1.a_star == ActiveSet((2,))
    assert f2.a_star == ActiveSet((1, 2))


def test_f1_x_star_against_brentq(f1):
    # on c2 = 0, x2 = 1/2 - x1^2 and f1 reduces to (x1 + 1/2)^2 + 4 x1^4
    x1 = brentq(lambda t: 2 * (t + 0.5) + 16 * t ** 3, -1.0, 0.0, xtol=1e-15)
    np.testing.assert_allclose(f1.x_star, [x1, 0.5 - x1 ** 2], atol=1e-10)
    c = f1.oracle.c(f1.x_star)
    assert abs(c[1]) <= 1e-8 and c[0] < 0


def test_f2_x_star_closed_form(f2):
    np.testing.assert_allclose(f2.x_star, [-0.5, 0.25], atol=1e-10)


@pytest.mark.parametrize("name", ["f1", "f2"])
def test_x_star_is_kkt_point(name):
    prob = make_parabola_problem(name)
    ev = evaluate_exact(prob.oracle, prob.x_star)
    assert np.all(ev.c_val <= 1e-9)
    assert ActiveSet.from_mask(np.abs(ev.c_val) <= 1e-8) == prob.a_star
    sol = solve_reduced_kkt(ev, prob.a_star, theta=5.0)
    z = np.zeros(2)
    z[[i - 1 for i in prob.a_star]] = sol.beta_active
    assert psi(ev, MultiplierPair(np.zeros(0), z)) <= 1e-7


def test_f2_multipliers(f2):
    ev = evaluate_exact(f2.oracle, f2.x_star)
    sol = solve_reduced_kkt(ev, f2.a_star, theta=5.0)
    np.testing.assert_allclose(sol.beta_active, [0.4, 0.4], atol=1e-8)


def test_reference_minimizer_on_a_disk():
    # min x1 + x2 on the unit disk: x* = -(1, 1)/sqrt(2)
    oracle = ProblemOracle(
        n=2, p=0, q=1,
        f=lambda x: x[0] + x[1], e=lambda x: np.zeros(0), c=lambda x: np.array([x @ x - 1.0]),
        grad_f=lambda x: np.ones(2), jac_e=lambda x: np.zeros((2, 0)), jac_c=lambda x: 2.0 * x.reshape(2, 1),
        name="disk",
    )
    x = reference_minimizer(oracle, np.array([-2.0, -2.0]), np.array([2.0, 2.0]))
    np.testing.assert_allclose(x, -np.ones(2) / np.sqrt(2), atol=1e-9)


def test_penalty_feasible_point(f1):
    x = np.array([0.0, 0.25])
    val, grad = penalty_objective(f1.oracle, x, 100.0)
    assert val == f1.oracle.f(x)
    np.testing.assert_array_equal(grad, f1.oracle.grad_f(x))


def test_penalty_violated_second_constraint(f1):
    x = np.array([0.1, 0.6])
    mu = 100.0
    c2 = f1.oracle.c(x)[1]
    assert c2 > 0 and f1.oracle.c(x)[0] < 0
    _, grad = penalty_objective(f1.oracle, x, mu)
    np.testing.assert_allclose(grad, f1.oracle.grad_f(x) + mu * c2 * f1.oracle.jac_c(x)[:, 1])


@given(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), st.floats(0.1, 1e3))
def test_penalty_gradient_fd(x, mu):
    oracle = parabola_oracle("f1")
    x = np.array(x)
    _, grad = penalty_objective(oracle, x, mu)
    fd = central_diff(lambda t: penalty_objective(oracle, t, mu)[0], x, h=1e-6)[:, 0]
    np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-6 * max(1.0, mu))


def test_penalty_requires_positive_mu(f1):
    with pytest.raises(ValueError):
        penalty_objective(f1.oracle, np.zeros(2), 0.0)


def test_unknown_problem():
    with pytest.raises(ValueError):
        make_parabola_problem("f3")
