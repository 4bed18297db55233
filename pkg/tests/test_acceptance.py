"""Acceptance criteria, one test each.

Every test appends a ``[PASS]``/``[FAIL]`` line to the acceptance summary
printed at the end of the pytest run, then asserts.
"""

import itertools
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES

from activeset_id import kkt
from activeset_id.cli import heatmap_csv_text, trajectory_csv_text
from activeset_id.experiments import GridConfig, TrajectoryConfig, run_grid, run_trajectory, success_statistics
from activeset_id.lp import OPTIMAL, LpLpecParams, identify_lp, simplex_solve
from activeset_id.numerics import perturbation_bound_holds
from activeset_id.problem import evaluate_exact, make_evaluation, make_parabola_problem
from activeset_id.qp import QpParams, enumerate_qp_oracle, solve_penalized_qp, solve_reduced_kkt
from activeset_id.verify import (noisy_psi_instance, lp_vertex_enumeration, random_bounded_lp, random_evaluation,
                                 random_feasible_qp, random_multipliers, random_perturbed_system,
                                 reduced_cost_certificate)

PROBLEMS = ("f1", "f2")
METHODS = ("lp", "qp")
RADIUS = 0.05
LEVELS = (0.0, 1e-2, 1e-1)
SEED = 0


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def exact_grid(name):
    return run_grid(GridConfig(problem=name, noise_levels=(0.0,), window=RADIUS, seed=SEED))


def noisy_grid(name):
    return run_grid(GridConfig(problem=name, noise_levels=LEVELS, trials=8, window=RADIUS, seed=SEED))


def trajectories(name):
    exact = run_trajectory(TrajectoryConfig(problem=name, seed=SEED))
    noisy = run_trajectory(TrajectoryConfig(problem=name, noise_level=1e-2, trials=10, seed=SEED))
    return exact, noisy


@pytest.fixture(scope="module")
def crit1():
    t0 = time.perf_counter()
    cells = {name: exact_grid(name) for name in PROBLEMS}
    return cells, time.perf_counter() - t0


@pytest.fixture(scope="module")
def crit2():
    t0 = time.perf_counter()
    cells = {name: noisy_grid(name) for name in PROBLEMS}
    return cells, time.perf_counter() - t0


@pytest.fixture(scope="module")
def crit10():
    return {name: trajectories(name) for name in PROBLEMS}


def test_criterion_01_exact_identification_near_x_star(crit1):
    cells, elapsed = crit1
    parts, ok = [], elapsed < 120
    for name in PROBLEMS:
        for m in METHODS:
            hits = sum(c.success[m] == 1.0 for c in cells[name])
            parts.append(f"{name}/{m} {hits}/{len(cells[name])}")
            ok &= hits == len(cells[name])
    report(1, "exact identification within 0.05 of x_star", ok, ", ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_02_noise_robustness_ordering(crit2):
    cells, elapsed = crit2
    parts, ok = [], elapsed < 600
    for name in PROBLEMS:
        prob = make_parabola_problem(name)
        stats = success_statistics(cells[name], RADIUS, prob.x_star)
        for m in METHODS:
            means = [stats[(m, e)] for e in LEVELS]
            ordered = means[0] >= means[1] >= means[2]
            ok &= ordered
            parts.append(f"{name}/{m} " + ">=".join(f"{v:.4f}" for v in means) + ("" if ordered else " (violated)"))
        best = max(stats[(m, 1e-2)] for m in METHODS)
        ok &= best >= 0.9
        parts.append(f"{name} best@1e-2 {best:.4f}")
    report(2, "noise robustness ordering", ok, "; ".join(parts) + f"; {elapsed:.1f}s")


def test_criterion_03_sandwich():
    prob = make_parabola_problem("f1")
    params = LpLpecParams()
    offsets = np.round(np.linspace(-RADIUS, RADIUS, 11), 12)
    lattice = [np.array(p) for p in itertools.product(offsets, offsets)]
    pick = np.random.default_rng(SEED).choice(len(lattice), size=50, replace=False)
    worst = np.inf
    for k in sorted(pick):
        ev = evaluate_exact(prob.oracle, prob.x_star + lattice[k])
        mult = identify_lp(ev, params).multipliers
        omega, _ = kkt.omega_bruteforce(ev, z_cap=params.M)
        lo = kkt.rho(ev, mult) / params.M
        hi = params.M * kkt.rho_bar(ev, mult)
        worst = min(worst, omega - (lo - 1e-7), (hi + 1e-7) - omega)
    report(3, "rho/M <= omega <= M rho_bar on 50 lattice points", worst >= 0, f"min margin {worst:.3e}")


def test_criterion_04_rho_bar_bound():
    rng = np.random.default_rng(SEED)
    violations = 0
    for _ in range(1000):
        ev = random_evaluation(rng, scale=float(10.0 ** rng.uniform(-4, 1)))
        m = random_multipliers(rng, ev, scale=float(10.0 ** rng.uniform(-4, 1)))
        r = kkt.rho(ev, m)
        bound = r + np.sqrt(ev.q) * np.sqrt(r)
        violations += kkt.rho_bar(ev, m) > bound + 1e-12 * max(1.0, bound)
    report(4, "rho_bar <= rho + sqrt(q rho) on 1000 instances", violations == 0, f"{violations} violations")


def test_criterion_05_noisy_psi_bracket():
    rng = np.random.default_rng(SEED)
    m_bar, violations, tightest = 10.0, 0, np.inf
    for _ in range(200):
        ev, noisy, m = noisy_psi_instance(rng, m_bar, max_eps=1e-3)
        b = noisy.bounds
        lo = kkt.rho(noisy, m) / m_bar - kkt.eps_rho(b, ev.n, ev.p, ev.q, m_bar)
        hi = kkt.rho_bar(noisy, m) + kkt.eps_rho_bar(b, ev.n, ev.p, ev.q, m_bar)
        val = kkt.psi(ev, m)
        violations += not (lo <= val <= hi)
        tightest = min(tightest, val - lo, hi - val)
    report(5, "noisy two-sided psi bracket on 200 instances", violations == 0,
           f"{violations} violations, tightest slack {tightest:.3e}")


def test_criterion_06_qp_oracle_equivalence():
    rng = np.random.default_rng(SEED)
    worst_d, worst_gap, bad = 0.0, 0.0, 0
    for i in range(500):
        ev = random_feasible_qp(rng)
        theta = (1.0, 5.0, 20.0)[i % 3]
        res = solve_penalized_qp(ev, QpParams(theta=theta, nu=1e4, max_iter=20000))
        diff = float(np.max(np.abs(res.d - enumerate_qp_oracle(ev, theta)), initial=0.0))
        worst_d, worst_gap = max(worst_d, diff), max(worst_gap, res.gap)
        bad += diff > 1e-6 or res.gap > 1e-8
    report(6, "penalized QP matches enumeration oracle on 500 instances", bad == 0,
           f"{bad} failures, max |dd| {worst_d:.2e}, max gap {worst_gap:.2e}")


def test_criterion_07_reduced_kkt_fixtures():
    ok, parts = True, []
    for name in PROBLEMS:
        prob = make_parabola_problem(name)
        ev = evaluate_exact(prob.oracle, prob.x_star)
        sol = solve_reduced_kkt(ev, prob.a_star, 5.0)
        dnorm = float(np.max(np.abs(sol.d)))
        ok &= dnorm <= 1e-8 and sol.beta_positive and sol.inactive_strict
        robust = 0
        patterns = list(itertools.product((-1.0, 1.0), repeat=ev.jac_c.size))
        for signs in patterns:
            jac_c = ev.jac_c + 1e-4 * np.reshape(signs, ev.jac_c.shape)
            try:
                pert = solve_reduced_kkt(make_evaluation(ev.grad_f, ev.jac_e, jac_c, ev.e_val, ev.c_val),
                                         prob.a_star, 5.0)
                robust += pert.beta_positive
            except ArithmeticError:
                pass
        ok &= robust == len(patterns)
        parts.append(f"{name} |d|={dnorm:.1e} beta={np.round(sol.beta_active, 6).tolist()} "
                     f"jitter {robust}/{len(patterns)}")
    report(7, "reduced KKT at x_star and under 1e-4 jitter", ok, "; ".join(parts))


def test_criterion_08_simplex_vs_vertex_enumeration():
    rng = np.random.default_rng(SEED)
    bad = 0
    for _ in range(200):
        lp = random_bounded_lp(rng)
        sol = simplex_solve(lp)
        ref = lp_vertex_enumeration(lp)
        bad += (sol.status != OPTIMAL or ref is None or abs(sol.objective - ref) > 1e-7 * max(1.0, abs(ref))
                or reduced_cost_certificate(lp, sol) is not None)
    report(8, "simplex equals vertex enumeration with certificate on 200 LPs", bad == 0, f"{bad} failures")


def test_criterion_09_perturbation_bound():
    rng = np.random.default_rng(SEED)
    fails = sum(not perturbation_bound_holds(*random_perturbed_system(rng)) for _ in range(200))
    report(9, "perturbed-system bound on 200 instances", fails == 0, f"{fails} failures")


def test_criterion_10_trajectories(crit10):
    ok, parts = True, []
    for name in PROBLEMS:
        prob = make_parabola_problem(name)
        exact, noisy = crit10[name]
        converged = exact[-1].grad_norm <= 1e-6
        near = [r for r in exact if np.max(np.abs(np.array(r.x) - prob.x_star)) <= 0.02]
        stable = bool(near) and all(r.exact_match == {"lp": 1.0, "qp": 1.0} for r in near)
        improve = all(noisy[-1].correct[m] >= noisy[0].correct[m] for m in METHODS)
        ok &= converged and stable and improve
        parts.append(f"{name} iters={exact[-1].iteration} grad={exact[-1].grad_norm:.1e} "
                     f"near={len(near)} all-correct={stable} noisy correct "
                     + " ".join(f"{m}:{noisy[0].correct[m]:.1f}->{noisy[-1].correct[m]:.1f}" for m in METHODS))
    report(10, "penalty-descent trajectories", ok, "; ".join(parts))


def test_criterion_11_determinism(crit1, crit2, crit10):
    same = []
    for name in PROBLEMS:
        same.append(heatmap_csv_text(crit1[0][name]) == heatmap_csv_text(exact_grid(name)))
        same.append(heatmap_csv_text(crit2[0][name]) == heatmap_csv_text(noisy_grid(name)))
        exact, noisy = trajectories(name)
        first = trajectory_csv_text({0.0: crit10[name][0], 1e-2: crit10[name][1]})
        same.append(first == trajectory_csv_text({0.0: exact, 1e-2: noisy}))
    report(11, "byte-identical CSV on rerun of criteria 1, 2, 10", all(same), f"{sum(same)}/{len(same)} identical")
