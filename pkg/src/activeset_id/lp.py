"""Bounded-variable primal simplex and the multiplier-based (LP-LPEC) identifier."""

from dataclasses import dataclass

import numpy as np

from . import kkt
from ._validation import check_scalar

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration-limit"

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11


class IdentificationError(RuntimeError):
    """The identification subproblem could not be solved to optimality."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True, eq=False)
class StandardLp:
    """``min c^T x  s.t.  A x = b,  lower <= x <= upper``.

    ``lower`` may hold ``-inf`` and ``upper`` may hold ``+inf``.
    """

    c: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).reshape(-1)
        nv = c.shape[0]
        a = np.asarray(self.a_eq, dtype=float).reshape(-1, nv)
        b = np.asarray(self.b_eq, dtype=float).reshape(a.shape[0])
        lo = np.asarray(self.lower, dtype=float).reshape(nv)
        hi = np.asarray(self.upper, dtype=float).reshape(nv)
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        if np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValueError("bounds must admit a finite value")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("LP data must be finite")
        for name, val in (("c", c), ("a_eq", a), ("b_eq", b), ("lower", lo), ("upper", hi)):
            object.__setattr__(self, name, val)

    @property
    def n_vars(self):
        return self.c.shape[0]

    @property
    def n_rows(self):
        return self.a_eq.shape[0]


@dataclass(frozen=True, eq=False)
class LpSolution:
    x: np.ndarray
    objective: float
    status: str
    iterations: int = 0
    basis: tuple = ()
    reduced_costs: np.ndarray = None


def _nonbasic_start(lo, hi):
    x = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    return x.astype(float)


class _Simplex:
    """Working state for one solve (artificial columns appended after structurals)."""

    def __init__(self, lp):
        m, nv = lp.n_rows, lp.n_vars
        x = _nonbasic_start(lp.lower, lp.upper)
        resid = lp.b_eq - lp.a_eq @ x
        sign = np.where(resid >= 0, 1.0, -1.0)
        self.a = np.hstack([lp.a_eq, np.diag(sign)]) if m else np.zeros((0, nv))
        self.b = lp.b_eq
        self.lo = np.concatenate([lp.lower, np.zeros(m)])
        self.hi = np.concatenate([lp.upper, np.full(m, np.inf)])
        self.x = np.concatenate([x, np.abs(resid)])
        self.basis = list(range(nv, nv + m))
        self.nv = nv
        self.m = m
        self.iterations = 0

    def _basic_values(self):
        nonbasic = np.ones(self.x.shape[0], dtype=bool)
        nonbasic[self.basis] = False
        rhs = self.b - self.a[:, nonbasic] @ self.x[nonbasic]
        return np.linalg.solve(self.a[:, self.basis], rhs)

    def reduced_costs(self, cost):
        if self.m == 0:
            return cost.copy()
        bmat = self.a[:, self.basis]
        pi = np.linalg.solve(bmat.T, cost[self.basis])
        d = cost - self.a.T @ pi
        d[self.basis] = 0.0
        return d

    def run(self, cost, max_iters):
        """Iterate with Bland's rule; returns a status string."""
        in_basis = np.zeros(self.x.shape[0], dtype=bool)
        while True:
            if self.iterations >= max_iters:
                return ITERATION_LIMIT
            if self.m:
                self.x[self.basis] = self._basic_values()
            d = self.reduced_costs(cost)
            in_basis[:] = False
            in_basis[self.basis] = True
            scale = max(1.0, float(np.max(np.abs(cost), initial=0.0)))
            tol = OPT_TOL * scale * 0.1
            entering, direction = None, 0.0
            for j in range(self.x.shape[0]):
                if in_basis[j] or self.lo[j] == self.hi[j]:
                    continue
                at_lo = self.x[j] == self.lo[j]
                at_hi = self.x[j] == self.hi[j]
                if d[j] < -tol and not at_hi:
                    entering, direction = j, 1.0
                    break
                if d[j] > tol and not at_lo:
                    entering, direction = j, -1.0
                    break
            if entering is None:
                return OPTIMAL
            j = entering
            w = np.linalg.solve(self.a[:, self.basis], self.a[:, j]) if self.m else np.zeros(0)
            delta = -direction * w  # change of basic variables per unit step
            # candidates: (step, variable index, basis position or None for a bound flip)
            candidates = [(self.hi[j] - self.lo[j], j, None)]
            for pos, var in enumerate(self.basis):
                dv = delta[pos]
                if dv < -PIVOT_TOL and np.isfinite(self.lo[var]):
                    candidates.append((max(0.0, (self.x[var] - self.lo[var]) / -dv), var, pos))
                elif dv > PIVOT_TOL and np.isfinite(self.hi[var]):
                    candidates.append((max(0.0, (self.hi[var] - self.x[var]) / dv), var, pos))
            t_best = min(c[0] for c in candidates)
            if not np.isfinite(t_best):
                return UNBOUNDED
            band = t_best + 1e-12 * max(1.0, t_best)
            # lowest variable index among the tied blocking candidates
            _, _, leave = min((c for c in candidates if c[0] <= band), key=lambda c: c[1])
            self.iterations += 1
            if self.m:
                self.x[self.basis] += delta * t_best
            self.x[j] += direction * t_best
            if leave is None:
                self.x[j] = self.hi[j] if direction > 0 else self.lo[j]
                continue
            var = self.basis[leave]
            self.x[var] = self.lo[var] if delta[leave] < 0 else self.hi[var]
            self.basis[leave] = j


def simplex_solve(lp, max_iters=10_000):
    """Solve a :class:`StandardLp` by the two-phase bounded-variable primal simplex.

    Entering and leaving variables follow Bland's lowest-index rule, so the
    result is deterministic and cycling cannot occur.  Free variables sit at
    zero while nonbasic.  Failures are reported through ``status``; no
    exception is raised for infeasible, unbounded or truncated solves.
    """
    sx = _Simplex(lp)
    nv, m = sx.nv, sx.m

    if m:
        phase1 = np.concatenate([np.zeros(nv), np.ones(m)])
        status = sx.run(phase1, max_iters)
        if status == ITERATION_LIMIT:
            return _finish(lp, sx, status, np.zeros(nv + m))
        infeas = float(np.sum(sx.x[nv:]))
        if infeas > FEAS_TOL * max(1.0, float(np.max(np.abs(lp.b_eq), initial=0.0))):
            return _finish(lp, sx, INFEASIBLE, phase1)
        # artificials are pinned at zero for phase 2
        sx.hi[nv:] = 0.0
        sx.x[nv:] = np.clip(sx.x[nv:], 0.0, 0.0)

    cost = np.concatenate([lp.c, np.zeros(m)])
    status = sx.run(cost, max_iters)
    return _finish(lp, sx, status, cost)


def _finish(lp, sx, status, cost):
    if sx.m:
        sx.x[sx.basis] = sx._basic_values()
    x = sx.x[:sx.nv].copy()
    d = sx.reduced_costs(cost)[:sx.nv]
    return LpSolution(
        x=x,
        objective=float(lp.c @ x),
        status=status,
        iterations=sx.iterations,
        basis=tuple(int(v) for v in sx.basis if v < sx.nv),
        reduced_costs=d,
    )


def find_feasible_point(a_eq, b_eq, a_ub, b_ub):
    """Return some ``x`` with ``a_eq x = b_eq`` and ``a_ub x <= b_ub``, or ``None``."""
    a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float))
    a_ub = np.atleast_2d(np.asarray(a_ub, dtype=float))
    n = max(a_eq.shape[1], a_ub.shape[1])
    a_eq = a_eq.reshape(-1, n)
    a_ub = a_ub.reshape(-1, n)
    k = a_ub.shape[0]
    # x = x_plus free; slack >= 0 turns inequalities into equalities
    a = np.vstack([np.hstack([a_eq, np.zeros((a_eq.shape[0], k))]), np.hstack([a_ub, np.eye(k)])])
    b = np.concatenate([np.asarray(b_eq, dtype=float).reshape(-1), np.asarray(b_ub, dtype=float).reshape(-1)])
    lo = np.concatenate([np.full(n, -np.inf), np.zeros(k)])
    hi = np.full(n + k, np.inf)
    sol = simplex_solve(StandardLp(np.zeros(n + k), a, b, lo, hi))
    if sol.status != OPTIMAL:
        return None
    return sol.x[:n]


# ---------------------------------------------------------------------------
# LP-LPEC identification


@dataclass(frozen=True)
class LpLpecParams:
    M: float = 1e8
    beta: float = 0.7071
    sigma: float = 0.7

    def __post_init__(self):
        check_scalar(self.M, "M", lower=0.0, closed="neither")
        check_scalar(self.beta, "beta", lower=0.0, closed="neither")
        check_scalar(self.sigma, "sigma", lower=0.0, upper=1.0, closed="neither")


@dataclass(frozen=True, eq=False)
class LpLpecResult:
    multipliers: kkt.MultiplierPair
    rho_tilde: float
    rho_bar_tilde: float
    threshold: float
    active_estimate: kkt.ActiveSet
    lp_objective: float
    lp: LpSolution


def assemble_lp_lpec(ev, params):
    """LP over ``(y, z, r, s)`` whose optimum minimizes ``rho`` subject to ``0 <= z <= M``.

    The constant part of ``rho`` (``||e||_1`` and the sum of nonnegative
    ``c_i``) is left out of the objective.
    """
    n, p, q = ev.n, ev.p, ev.q
    cost_z = np.where(ev.c_val < 0, -ev.c_val, 0.0)
    cost = np.concatenate([np.zeros(p), cost_z, np.ones(2 * n)])
    a_eq = np.hstack([ev.jac_e, ev.jac_c, -np.eye(n), np.eye(n)])
    b_eq = -ev.grad_f
    lower = np.concatenate([np.full(p, -np.inf), np.zeros(q + 2 * n)])
    upper = np.concatenate([np.full(p, np.inf), np.full(q, params.M), np.full(2 * n, np.inf)])
    return StandardLp(cost, a_eq, b_eq, lower, upper)


def rho_constant(ev):
    """Part of ``rho`` that does not depend on the multipliers."""
    c = ev.c_val
    return float(np.abs(ev.e_val).sum() + c[c >= 0].sum())


def identify_lp(ev, params=None, max_iters=10_000):
    """Estimate the active set from multipliers minimizing ``rho`` at ``ev``.

    Constraint ``i`` is declared active when ``c_i >= -(beta * rho_bar)^sigma``,
    where ``rho_bar`` is evaluated at the LP multipliers.
    """
    params = params or LpLpecParams()
    lp = assemble_lp_lpec(ev, params)
    sol = simplex_solve(lp, max_iters=max_iters)
    if sol.status != OPTIMAL:
        raise IdentificationError(f"LP-LPEC subproblem not solved: {sol.status}", sol.status)
    p, q = ev.p, ev.q
    z = np.clip(sol.x[p:p + q], 0.0, params.M)
    mult = kkt.MultiplierPair(y=sol.x[:p].copy(), z=z)
    rt = kkt.rho(ev, mult)
    rbt = kkt.rho_bar(ev, mult)
    threshold = -((params.beta * rbt) ** params.sigma) if rbt > 0 else 0.0
    active = kkt.ActiveSet.from_mask(ev.c_val >= threshold)
    return LpLpecResult(
        multipliers=mult,
        rho_tilde=rt,
        rho_bar_tilde=rbt,
        threshold=threshold,
        active_estimate=active,
        lp_objective=sol.objective,
        lp=sol,
    )
