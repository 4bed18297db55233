"""Seeded property suites behind ``activeset-id verify``.

Each check takes a numpy ``Generator`` and an instance count and returns a
:class:`PropertyResult`.  The functions under test are parameters where a
mutation fixture needs to swap them out.  Independent reference oracles
(vertex enumeration for LPs, working-set enumeration for the step QP) live
here as well so the tests can share them.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import kkt, numerics
from .lp import OPTIMAL, LpLpecParams, StandardLp, identify_lp, simplex_solve
from .problem import ErrorBounds, NoiseSpec, evaluate_exact, make_evaluation, make_parabola_problem, perturb
from .qp import QpParams, enumerate_qp_oracle, solve_penalized_qp, solve_reduced_kkt


@dataclass(frozen=True)
class PropertyResult:
    module: str
    name: str
    passed: bool
    cases: int
    counterexample: str = ""

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        out = f"{tag} {self.module}.{self.name} ({self.cases} cases)"
        return out if self.passed else f"{out}: {self.counterexample}"


def _result(module, name, cases, failure):
    return PropertyResult(module, name, failure is None, cases, failure or "")


# ---------------------------------------------------------------------------
# random instance generators


def random_evaluation(rng, n=None, p=None, q=None, scale=1.0):
    n = int(rng.integers(1, 6)) if n is None else n
    p = int(rng.integers(0, min(n, 2) + 1)) if p is None else p
    q = int(rng.integers(0, 5)) if q is None else q
    return make_evaluation(
        grad_f=rng.uniform(-scale, scale, n),
        jac_e=rng.uniform(-scale, scale, (n, p)),
        jac_c=rng.uniform(-scale, scale, (n, q)),
        e_val=rng.uniform(-scale, scale, p),
        c_val=rng.uniform(-scale, scale, q),
        x=np.zeros(n),
    )


def random_multipliers(rng, ev, scale=1.0):
    return kkt.MultiplierPair(y=rng.uniform(-scale, scale, ev.p), z=rng.uniform(0.0, scale, ev.q))


def random_feasible_qp(rng):
    """Evaluation whose linearized constraints admit a point (built from a known one)."""
    n = int(rng.integers(1, 6))
    p = int(rng.integers(0, min(n, 2) + 1))
    q = int(rng.integers(0, 5))
    jac_e = rng.normal(size=(n, p))
    jac_c = rng.normal(size=(n, q))
    d0 = rng.normal(size=n)
    slack = np.where(rng.random(q) < 0.3, 0.0, rng.uniform(0.0, 1.0, q))
    return make_evaluation(
        grad_f=rng.normal(size=n) * 2.0,
        jac_e=jac_e, jac_c=jac_c,
        e_val=-jac_e.T @ d0,
        c_val=-jac_c.T @ d0 - slack,
        x=np.zeros(n),
    )


def random_bounded_lp(rng):
    """Feasible LP with every variable boxed, so the optimum sits at a vertex."""
    nv = int(rng.integers(2, 7))
    m = int(rng.integers(1, min(nv, 3) + 1))
    a = rng.integers(-4, 5, size=(m, nv)).astype(float)
    lo = rng.integers(-3, 1, size=nv).astype(float)
    hi = lo + rng.integers(1, 5, size=nv)
    x0 = rng.uniform(lo, hi)
    return StandardLp(rng.integers(-5, 6, size=nv).astype(float), a, a @ x0, lo, hi)


# ---------------------------------------------------------------------------
# reference oracles


def lp_vertex_enumeration(lp, tol=1e-9):
    """Optimal value of a boxed LP by enumerating basic solutions.

    Every choice of ``m`` linearly independent basic columns and every
    lower/upper assignment of the rest is tried; the best feasible vertex
    wins.  Returns ``None`` when no vertex is feasible.
    """
    a, b, lo, hi = lp.a_eq, lp.b_eq, lp.lower, lp.upper
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("vertex enumeration needs finite bounds")
    m, nv = a.shape
    rank = np.linalg.matrix_rank(a)
    best = None
    for basis in itertools.combinations(range(nv), rank):
        cols = list(basis)
        sub = a[:, cols]
        if np.linalg.matrix_rank(sub) < rank:
            continue
        rest = [j for j in range(nv) if j not in basis]
        for bits in itertools.product((0, 1), repeat=len(rest)):
            x = np.zeros(nv)
            for bit, j in zip(bits, rest):
                x[j] = hi[j] if bit else lo[j]
            xb, *_ = np.linalg.lstsq(sub, b - a[:, rest] @ x[rest], rcond=None)
            x[cols] = xb
            scale = 1.0 + np.max(np.abs(b), initial=0.0)
            if np.max(np.abs(a @ x - b), initial=0.0) > tol * scale:
                continue
            if np.any(x < lo - tol) or np.any(x > hi + tol):
                continue
            val = float(lp.c @ x)
            if best is None or val < best:
                best = val
    return best


def reduced_cost_certificate(lp, sol, tol=1e-7):
    """Check primal feasibility and reduced-cost signs of a simplex solution."""
    x, d = sol.x, sol.reduced_costs
    scale = 1.0 + np.max(np.abs(lp.c), initial=0.0)
    if np.max(np.abs(lp.a_eq @ x - lp.b_eq), initial=0.0) > tol * (1 + np.max(np.abs(lp.b_eq), initial=0)):
        return "equality residual too large"
    if np.any(x < lp.lower - tol) or np.any(x > lp.upper + tol):
        return "bound violated"
    basic = np.zeros(x.shape[0], dtype=bool)
    basic[list(sol.basis)] = True
    for j in np.flatnonzero(~basic):
        at_lo = abs(x[j] - lp.lower[j]) <= tol
        at_hi = abs(x[j] - lp.upper[j]) <= tol
        if at_lo and at_hi:
            continue
        if at_lo and d[j] < -tol * scale:
            return f"variable {j} at lower bound has reduced cost {d[j]:.3e}"
        if at_hi and d[j] > tol * scale:
            return f"variable {j} at upper bound has reduced cost {d[j]:.3e}"
        if not (at_lo or at_hi) and abs(d[j]) > tol * scale:
            return f"free nonbasic variable {j} has reduced cost {d[j]:.3e}"
    return None


# ---------------------------------------------------------------------------
# numerics


def check_lu_reconstruction(rng, count):
    for k in range(count):
        n = int(rng.integers(1, 8))
        a = rng.normal(size=(n, n))
        fac = numerics.lu_factor(a)
        err = np.max(np.abs(a[fac.perm] - fac.L @ fac.U))
        if err > 1e-12 * max(1.0, np.max(np.abs(a))):
            return _result("numerics", "lu_reconstruction", k + 1, f"n={n}, residual {err:.3e}")
    return _result("numerics", "lu_reconstruction", count, None)


def random_perturbed_system(rng):
    n = int(rng.integers(1, 7))
    k = rng.normal(size=(n, n)) + n * np.eye(n)
    kinv = numerics.inf_norm(numerics.inverse(k))
    dk = rng.normal(size=(n, n))
    dk *= rng.uniform(0.01, 0.9) / (kinv * numerics.inf_norm(dk))
    b = rng.normal(size=n)
    db = rng.normal(size=n) * rng.uniform(0.0, 0.5)
    return k, dk, b, db


def check_perturbation_bound(rng, count, holds=numerics.perturbation_bound_holds):
    for i in range(count):
        k, dk, b, db = random_perturbed_system(rng)
        if not holds(k, dk, b, db):
            return _result("numerics", "perturbation_bound", i + 1, f"K={k.tolist()}, dK={dk.tolist()}")
    return _result("numerics", "perturbation_bound", count, None)


# ---------------------------------------------------------------------------
# problem


def check_noise_bounds(rng, count):
    prob = make_parabola_problem("f1")
    for i in range(count):
        x = rng.uniform(-1, 1, 2)
        eps = float(10.0 ** rng.uniform(-6, 0))
        exact = evaluate_exact(prob.oracle, x)
        noisy = perturb(exact, NoiseSpec(eps, int(rng.integers(0, 2**63))))
        for a, b in zip(exact.arrays(), noisy.arrays()):
            if np.any(np.abs(np.asarray(a) - np.asarray(b)) > eps):
                return _result("problem", "noise_within_level", i + 1, f"x={x.tolist()}, eps={eps}")
        if not perturb(exact, NoiseSpec(0.0, i)).same_values(exact):
            return _result("problem", "noise_within_level", i + 1, "eps=0 changed values")
    return _result("problem", "noise_within_level", count, None)


# ---------------------------------------------------------------------------
# kkt


def mutant_rho_bar(ev, m):
    """``rho_bar`` with a sign/partition bug: the ``c_i >= 0`` sum taken as ``-c_i`` over ``c_i < 0``."""
    y, z = np.asarray(m.y, float), np.asarray(m.z, float)
    c = ev.c_val
    neg = c < 0
    return kkt.kappa(ev, m) + float(np.sum(np.sqrt(np.maximum(0.0, -c[neg] * z[neg]))) + np.sum(-c[neg]))


def check_rho_bar_bound(rng, count, rho=kkt.rho, rho_bar=kkt.rho_bar):
    """``rho_bar <= rho + sqrt(q) sqrt(rho)`` on random evaluations with ``z >= 0``."""
    for i in range(count):
        ev = random_evaluation(rng, scale=float(10.0 ** rng.uniform(-4, 1)))
        m = random_multipliers(rng, ev, scale=float(10.0 ** rng.uniform(-4, 1)))
        r, rb = rho(ev, m), rho_bar(ev, m)
        bound = r + np.sqrt(ev.q) * np.sqrt(r)
        if rb > bound + 1e-12 * max(1.0, bound):
            return _result("kkt", "rho_bar_bound", i + 1,
                           f"rho_bar={rb:.6g} > {bound:.6g} (q={ev.q}, c={ev.c_val.tolist()}, z={m.z.tolist()})")
    return _result("kkt", "rho_bar_bound", count, None)


def noisy_psi_instance(rng, m_bar=10.0, max_eps=1e-3):
    """Exact/noisy pair plus multipliers with ``||c||, ||y||, ||z|| <= m_bar`` (inf-norm)."""
    ev = random_evaluation(rng)
    ev = make_evaluation(ev.grad_f, ev.jac_e, ev.jac_c, ev.e_val,
                         rng.uniform(-m_bar, m_bar, ev.q), x=ev.x)
    m = kkt.MultiplierPair(y=rng.uniform(-m_bar, m_bar, ev.p), z=rng.uniform(0.0, m_bar, ev.q))
    eps = float(rng.uniform(0.0, max_eps))
    noisy = perturb(ev, NoiseSpec(eps, int(rng.integers(0, 2**63))))
    return ev, noisy, m


def check_noisy_psi_bracket(rng, count, m_bar=10.0):
    for i in range(count):
        ev, noisy, m = noisy_psi_instance(rng, m_bar)
        b = noisy.bounds
        lo = kkt.rho(noisy, m) / m_bar - kkt.eps_rho(b, ev.n, ev.p, ev.q, m_bar)
        hi = kkt.rho_bar(noisy, m) + kkt.eps_rho_bar(b, ev.n, ev.p, ev.q, m_bar)
        val = kkt.psi(ev, m)
        if not lo <= val <= hi:
            return _result("kkt", "noisy_psi_bracket", i + 1, f"{lo:.6g} <= {val:.6g} <= {hi:.6g} fails")
    return _result("kkt", "noisy_psi_bracket", count, None)


def check_omega_sandwich(rng, count, radius=0.05, params=None, slack=1e-7):
    """``rho / M <= omega <= M rho_bar`` at the LP-LPEC multipliers on f1 near ``x_star``."""
    params = params or LpLpecParams()
    prob = make_parabola_problem("f1")
    for i in range(count):
        x = prob.x_star + rng.uniform(-radius, radius, 2)
        ev = evaluate_exact(prob.oracle, x)
        mult = identify_lp(ev, params).multipliers
        omega, _ = kkt.omega_bruteforce(ev, z_cap=params.M)
        lo = kkt.rho(ev, mult) / params.M
        hi = params.M * kkt.rho_bar(ev, mult)
        if not (lo - slack <= omega <= hi + slack):
            return _result("kkt", "omega_sandwich", i + 1, f"x={x.tolist()}: {lo:.6g} <= {omega:.6g} <= {hi:.6g}")
    return _result("kkt", "omega_sandwich", count, None)


# ---------------------------------------------------------------------------
# lp


def check_simplex_vs_vertices(rng, count, tol=1e-7):
    for i in range(count):
        lp = random_bounded_lp(rng)
        sol = simplex_solve(lp)
        ref = lp_vertex_enumeration(lp)
        if sol.status != OPTIMAL or ref is None:
            return _result("lp", "simplex_matches_vertices", i + 1, f"status {sol.status}, oracle {ref}")
        if abs(sol.objective - ref) > tol * max(1.0, abs(ref)):
            return _result("lp", "simplex_matches_vertices", i + 1, f"simplex {sol.objective!r} vs {ref!r}")
        why = reduced_cost_certificate(lp, sol)
        if why:
            return _result("lp", "simplex_matches_vertices", i + 1, why)
    return _result("lp", "simplex_matches_vertices", count, None)


def check_lp_determinism(rng, count):
    for i in range(count):
        ev = random_evaluation(rng)
        a, b = identify_lp(ev), identify_lp(ev)
        if a.active_estimate != b.active_estimate or not np.array_equal(a.multipliers.z, b.multipliers.z):
            return _result("lp", "deterministic", i + 1, "repeat solve differs")
    return _result("lp", "deterministic", count, None)


# ---------------------------------------------------------------------------
# qp


def check_qp_duality(rng, count, params=None):
    """Weak duality and the primal recovery identity on random instances."""
    params = params or QpParams()
    for i in range(count):
        ev = random_evaluation(rng)
        res = solve_penalized_qp(ev, params)
        if res.primal_obj < res.dual_obj - 1e-10:
            return _result("qp", "duality", i + 1, f"primal {res.primal_obj} < dual {res.dual_obj}")
        resid = params.theta * res.d + ev.grad_f + ev.jac_e @ res.alpha + ev.jac_c @ res.beta
        if np.max(np.abs(resid), initial=0.0) > 1e-10:
            return _result("qp", "duality", i + 1, f"recovery residual {np.max(np.abs(resid)):.3e}")
    return _result("qp", "duality", count, None)


def check_qp_oracle(rng, count, nu=1e4, thetas=(1.0, 5.0, 20.0), d_tol=1e-6, gap_tol=1e-8):
    for i in range(count):
        ev = random_feasible_qp(rng)
        theta = thetas[i % len(thetas)]
        res = solve_penalized_qp(ev, QpParams(theta=theta, nu=nu, gap_tol=gap_tol, max_iter=20000))
        ref = enumerate_qp_oracle(ev, theta)
        diff = np.max(np.abs(res.d - ref), initial=0.0)
        if diff > d_tol or res.gap > gap_tol:
            return _result("qp", "penalized_matches_oracle", i + 1,
                           f"n={ev.n} p={ev.p} q={ev.q} theta={theta}: |dd|={diff:.3e}, gap={res.gap:.3e}")
    return _result("qp", "penalized_matches_oracle", count, None)


def check_reduced_kkt_fixtures(rng, count, theta=5.0, jitter=1e-4):
    """Zero step and positive multipliers at ``x_star``; stays nonsingular under Jacobian jitter."""
    for name in ("f1", "f2"):
        prob = make_parabola_problem(name)
        ev = evaluate_exact(prob.oracle, prob.x_star)
        sol = solve_reduced_kkt(ev, prob.a_star, theta)
        if np.max(np.abs(sol.d)) > 1e-8 or not sol.beta_positive or not sol.inactive_strict:
            return _result("qp", "reduced_kkt_fixture", 0, f"{name}: d={sol.d.tolist()}, beta={sol.beta_active.tolist()}")
        for k in range(count):
            jac_c = ev.jac_c + rng.choice([-jitter, jitter], size=ev.jac_c.shape)
            pert = make_evaluation(ev.grad_f, ev.jac_e, jac_c, ev.e_val, ev.c_val, x=ev.x)
            try:
                sol = solve_reduced_kkt(pert, prob.a_star, theta)
            except ArithmeticError as exc:
                return _result("qp", "reduced_kkt_fixture", k + 1, f"{name}: {exc}")
            if not sol.beta_positive:
                return _result("qp", "reduced_kkt_fixture", k + 1, f"{name}: beta={sol.beta_active.tolist()}")
    return _result("qp", "reduced_kkt_fixture", count, None)


# ---------------------------------------------------------------------------

#: (check, full count, quick count)
SUITE = (
    (check_lu_reconstruction, 200, 20),
    (check_perturbation_bound, 200, 20),
    (check_noise_bounds, 200, 20),
    (check_rho_bar_bound, 1000, 100),
    (check_noisy_psi_bracket, 200, 20),
    (check_omega_sandwich, 50, 5),
    (check_simplex_vs_vertices, 200, 20),
    (check_lp_determinism, 50, 5),
    (check_qp_duality, 200, 20),
    (check_qp_oracle, 500, 50),
    (check_reduced_kkt_fixtures, 50, 5),
)


def run_suite(seed=0, quick=False, overrides=None):
    """Run every check with a generator seeded from ``(seed, position)``.

    ``overrides`` maps a check name to a replacement callable, which is how
    mutation fixtures are injected.
    """
    overrides = overrides or {}
    results = []
    for pos, (check, full, short) in enumerate(SUITE):
        fn = overrides.get(check.__name__, check)
        rng = np.random.default_rng([int(seed) & (2**64 - 1), pos])
        results.append(fn(rng, short if quick else full))
    return results


__all__ = ["PropertyResult", "run_suite", "SUITE", "ErrorBounds"]
