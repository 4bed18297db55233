import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from activeset_id import kkt
from activeset_id.kkt import ActiveSet, MultiplierPair, active_set_exact, kappa, omega_bruteforce, psi, rho, rho_bar
from activeset_id.problem import evaluate_exact, make_evaluation, make_parabola_problem
from activeset_id.qp import solve_reduced_kkt
from activeset_id.verify import (check_rho_bar_bound, noisy_psi_instance, mutant_rho_bar, random_evaluation,
                                 random_multipliers)

seeds = st.integers(0, 2**32 - 1)


def ev_of(grad_f=(), c=(), jac_c=None, e=(), jac_e=None):
    grad_f = np.asarray(grad_f, float)
    n = grad_f.shape[0]
    c = np.asarray(c, float)
    e = np.asarray(e, float)
    return make_evaluation(grad_f, np.zeros((n, e.size)) if jac_e is None else jac_e,
                           np.zeros((n, c.size)) if jac_c is None else jac_c, e, c)


def test_active_set_basics():
    a = ActiveSet((1, 3), q=3)
    assert str(a) == "{1,3}"
    assert list(a.mask()) == [True, False, True]
    assert ActiveSet.parse("{3,1}", q=3) == a
    assert ActiveSet.parse("{}") == ActiveSet(())
    assert len(a & ActiveSet((3,))) == 1 and 1 in (a - ActiveSet((3,)))
    with pytest.raises(ValueError):
        ActiveSet((2, 1))
    with pytest.raises(ValueError):
        ActiveSet((0,))
    with pytest.raises(ValueError):
        ActiveSet((4,), q=3)


@given(st.lists(st.booleans(), max_size=8))
def test_mask_round_trip(bits):
    mask = np.array(bits, dtype=bool)
    assert np.array_equal(ActiveSet.from_mask(mask).mask(len(bits)), mask)


@pytest.mark.parametrize("c, tol, expected", [
    ((-1.0, 0.0), 1e-8, (2,)), ((0.0, 0.0), 0.0, (1, 2)), ((-1e-9, -1.0), 1e-8, (1,)),
])
def test_active_set_exact(c, tol, expected):
    assert active_set_exact(np.array(c), tol) == ActiveSet(expected)


def test_psi_at_x_star_f1():
    prob = make_parabola_problem("f1")
    ev = evaluate_exact(prob.oracle, prob.x_star)
    sol = solve_reduced_kkt(ev, prob.a_star, theta=5.0)
    assert psi(ev, MultiplierPair(np.zeros(0), np.array([0.0, sol.beta_active[0]]))) <= 1e-7


@given(seeds)
def test_psi_with_zero_multipliers(seed):
    ev = random_evaluation(np.random.default_rng(seed))
    expected = np.abs(ev.grad_f).sum() + np.abs(ev.e_val).sum() + np.maximum(ev.c_val, 0).sum()
    np.testing.assert_allclose(psi(ev, MultiplierPair(np.zeros(ev.p), np.zeros(ev.q))), expected, rtol=1e-12)


def test_psi_min_branch():
    ev = ev_of(grad_f=[0.0], c=[-5.0], jac_c=np.zeros((1, 1)))
    assert psi(ev, MultiplierPair(np.zeros(0), np.array([1.0]))) == 1.0
    assert psi(ev, MultiplierPair(np.zeros(0), np.array([3.0]))) == 3.0


def test_kappa_zero_and_p0():
    assert kappa(ev_of(grad_f=[0.0, 0.0], c=[-1.0]), MultiplierPair(np.zeros(0), np.zeros(1))) == 0.0
    ev = ev_of(grad_f=[1.0, -2.0], c=[-1.0], jac_c=np.array([[1.0], [1.0]]))
    assert kappa(ev, MultiplierPair(np.zeros(0), np.array([0.5]))) == 1.5 + 1.5


@given(seeds)
def test_kappa_direct_sum(seed):
    rng = np.random.default_rng(seed)
    ev = random_evaluation(rng)
    m = random_multipliers(rng, ev)
    g = ev.grad_f.copy()
    for j in range(ev.p):
        g += m.y[j] * ev.jac_e[:, j]
    for i in range(ev.q):
        g += m.z[i] * ev.jac_c[:, i]
    k = sum(abs(v) for v in g) + sum(abs(v) for v in ev.e_val)
    np.testing.assert_allclose(kappa(ev, m), k, rtol=1e-12, atol=1e-15)
    assert kappa(ev, m) <= psi(ev, m) + 1e-12


def test_rho_with_zero_z():
    ev = ev_of(grad_f=[1.0, -1.0], c=[-1.0, -2.0])
    m = MultiplierPair(np.zeros(0), np.zeros(2))
    assert rho(ev, m) == rho_bar(ev, m) == kappa(ev, m)


def test_rho_single_constraint():
    ev = ev_of(grad_f=[0.0], c=[-4.0], jac_c=np.zeros((1, 1)))
    m = MultiplierPair(np.zeros(0), np.array([1.0]))
    assert rho(ev, m) == 4.0
    assert rho_bar(ev, m) == 2.0


def test_rho_zero_constraint_goes_to_nonnegative_sum():
    ev = ev_of(grad_f=[0.0], c=[0.0, 2.0], jac_c=np.zeros((1, 2)))
    m = MultiplierPair(np.zeros(0), np.array([5.0, 5.0]))
    assert rho(ev, m) == rho_bar(ev, m) == 2.0


def test_rho_rejects_negative_z():
    ev = ev_of(grad_f=[0.0], c=[-1.0])
    with pytest.raises(ValueError):
        rho(ev, MultiplierPair(np.zeros(0), np.array([-1e-3])))
    with pytest.raises(ValueError):
        rho_bar(ev, MultiplierPair(np.zeros(0), np.array([-1e-3])))


def test_dimension_mismatch():
    ev = ev_of(grad_f=[0.0], c=[-1.0])
    with pytest.raises(ValueError):
        psi(ev, MultiplierPair(np.zeros(1), np.zeros(1)))


@given(seeds, st.floats(-4, 1), st.floats(-4, 1))
def test_rho_bar_bound(seed, log_scale, log_mult):
    rng = np.random.default_rng(seed)
    ev = random_evaluation(rng, scale=10.0 ** log_scale)
    m = random_multipliers(rng, ev, scale=10.0 ** log_mult)
    r = rho(ev, m)
    bound = r + np.sqrt(ev.q) * np.sqrt(r)
    assert rho_bar(ev, m) <= bound + 1e-12 * max(1.0, bound)


def test_mutation_is_caught():
    res = check_rho_bar_bound(np.random.default_rng(0), 1000, rho_bar=mutant_rho_bar)
    assert not res.passed and res.counterexample


@given(seeds)
def test_noisy_psi_bracket(seed):
    rng = np.random.default_rng(seed)
    m_bar = 10.0
    ev, noisy, m = noisy_psi_instance(rng, m_bar)
    b = noisy.bounds
    val = psi(ev, m)
    assert kkt.rho(noisy, m) / m_bar - kkt.eps_rho(b, ev.n, ev.p, ev.q, m_bar) <= val
    assert val <= kkt.rho_bar(noisy, m) + kkt.eps_rho_bar(b, ev.n, ev.p, ev.q, m_bar)


def test_eps_formulas_vanish_without_noise():
    from activeset_id.problem import ErrorBounds
    assert kkt.eps_rho(ErrorBounds(), 3, 1, 2, 10.0) == 0.0
    assert kkt.eps_rho_bar(ErrorBounds(), 3, 1, 2, 10.0) == 0.0


def test_omega_at_x_star():
    prob = make_parabola_problem("f1")
    value, _ = omega_bruteforce(evaluate_exact(prob.oracle, prob.x_star))
    assert value <= 1e-7


def test_omega_single_violated_constraint():
    # c > 0 forces the -c branch: psi = |g + a z| + c, minimized by z = 2
    ev = ev_of(grad_f=[-2.0], c=[0.5], jac_c=np.ones((1, 1)))
    value, m = omega_bruteforce(ev)
    assert value == pytest.approx(0.5)
    assert m.z[0] == pytest.approx(2.0)


@given(seeds)
def test_omega_below_random_multipliers(seed):
    rng = np.random.default_rng(seed)
    ev = random_evaluation(rng)
    value, best = omega_bruteforce(ev)
    assert value == pytest.approx(psi(ev, best), abs=1e-9)
    for _ in range(100):
        assert value <= psi(ev, random_multipliers(rng, ev, scale=3.0)) + 1e-9


def test_omega_enumeration_limit():
    ev = ev_of(grad_f=[0.0], c=-np.ones(13))
    with pytest.raises(kkt.EnumerationLimitError):
        omega_bruteforce(ev)
