"""Primal-step identification through the penalized step QP.

The step QP at ``x`` is::

    min  g^T d + nu (1^T r + 1^T s + 1^T t) + theta/2 ||d||^2
    s.t. e + E^T d = r - s,   c + C^T d <= t,   r, s, t >= 0

with ``g = grad f``, ``E = jac e`` and ``C = jac c``.  It is solved through
its dual, a concave quadratic over the box ``-nu <= alpha <= nu``,
``0 <= beta <= nu``.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from . import kkt
from ._validation import check_scalar
from .lp import find_feasible_point
from .numerics import lu_factor, solve

#: Band used when testing linearized constraints for activity.
DEFAULT_TOL_ACT = 1e-8


class RankDeficiencyError(ArithmeticError):
    """The reduced KKT matrix is singular (active gradients are dependent)."""


class InfeasibleQpError(ValueError):
    """The hard-constrained step QP has no feasible point."""


@dataclass(frozen=True)
class QpParams:
    theta: float = 5.0
    nu: float = 100.0
    gap_tol: float = 1e-8
    max_iter: int = 5000
    tol_act: float = DEFAULT_TOL_ACT

    def __post_init__(self):
        check_scalar(self.theta, "theta", lower=0.0, closed="neither")
        check_scalar(self.nu, "nu", lower=0.0, closed="neither")
        check_scalar(self.gap_tol, "gap_tol", lower=0.0, closed="neither")
        check_scalar(self.tol_act, "tol_act", lower=0.0)
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class QpResult:
    d: np.ndarray
    r: np.ndarray
    s: np.ndarray
    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    primal_obj: float
    dual_obj: float
    gap: float
    converged: bool
    iterations: int
    active_estimate: kkt.ActiveSet = None


@dataclass(frozen=True, eq=False)
class ReducedKktSolution:
    d: np.ndarray
    alpha: np.ndarray
    beta_active: np.ndarray
    active: kkt.ActiveSet
    inactive_strict: bool
    beta_positive: bool


class _Dual:
    """Dual objective, gradient and primal recovery for one Evaluation."""

    def __init__(self, ev, theta, nu):
        self.g = ev.grad_f
        self.jac = np.hstack([ev.jac_e, ev.jac_c])
        self.b = np.concatenate([ev.e_val, ev.c_val])
        self.p = ev.p
        self.theta = theta
        self.nu = nu
        self.lo = np.concatenate([np.full(ev.p, -nu), np.zeros(ev.q)])
        self.hi = np.full(ev.p + ev.q, nu)

    def value_grad(self, lam):
        w = self.g + self.jac @ lam
        val = self.b @ lam - 0.5 / self.theta * (w @ w)
        grad = self.b - self.jac.T @ w / self.theta
        return val, grad

    def project(self, lam):
        return np.clip(lam, self.lo, self.hi)

    def primal(self, lam):
        d = -(self.g + self.jac @ lam) / self.theta
        lin = self.b + self.jac.T @ d
        lin_e, lin_c = lin[:self.p], lin[self.p:]
        r = np.maximum(lin_e, 0.0)
        s = np.maximum(-lin_e, 0.0)
        t = np.maximum(lin_c, 0.0)
        obj = self.g @ d + self.nu * (r.sum() + s.sum() + t.sum()) + 0.5 * self.theta * (d @ d)
        return d, r, s, t, float(obj)

    def newton_candidate(self, lam, grad):
        """Maximize over the variables not held at a bound by the gradient."""
        at_lo = (lam <= self.lo) & (grad <= 0)
        at_hi = (lam >= self.hi) & (grad >= 0)
        free = ~(at_lo | at_hi)
        if not np.any(free):
            return None
        jf = self.jac[:, free]
        step, *_ = np.linalg.lstsq(jf.T @ jf, self.theta * grad[free], rcond=None)
        out = lam.copy()
        out[free] += step
        return self.project(out)


def solve_penalized_qp(ev, params=None):
    """Solve the penalized step QP through its box-constrained dual.

    Projected gradient ascent with Barzilai-Borwein step lengths and a
    monotone backtracking safeguard, interleaved with a Newton step on the
    variables away from their bounds.  Stops once the primal-dual gap at
    the recovered primal point is at most ``params.gap_tol``; otherwise the
    result comes back with ``converged=False``.
    """
    params = params or QpParams()
    dual = _Dual(ev, params.theta, params.nu)
    m = dual.b.shape[0]
    lam = np.zeros(m)
    val, grad = dual.value_grad(lam)
    step = 1.0
    lam_prev = grad_prev = None
    converged = False
    it = 0
    primal = dual.primal(lam)
    best = (lam, val, primal)

    for it in range(1, int(params.max_iter) + 1):
        gap = primal[-1] - val
        if gap <= params.gap_tol:
            converged = True
            break
        if m == 0:
            break

        if lam_prev is not None:
            s_vec = lam - lam_prev
            y_vec = grad_prev - grad  # positive curvature for a concave objective
            sy = s_vec @ y_vec
            step = (s_vec @ s_vec) / sy if sy > 1e-300 else 1e10
            step = min(max(step, 1e-10), 1e10)
        trial_step = step
        while True:
            cand = dual.project(lam + trial_step * grad)
            cval, cgrad = dual.value_grad(cand)
            if cval >= val - 1e-14 * max(1.0, abs(val)) or trial_step < 1e-14:
                break
            trial_step *= 0.5
        lam_prev, grad_prev = lam, grad
        lam, val, grad = cand, cval, cgrad

        newton = dual.newton_candidate(lam, grad)
        if newton is not None:
            nval, ngrad = dual.value_grad(newton)
            if nval > val:
                lam_prev, grad_prev = lam, grad
                lam, val, grad = newton, nval, ngrad
        primal = dual.primal(lam)
        if val >= best[1]:
            best = (lam, val, primal)
    else:
        it = int(params.max_iter)

    lam, val, primal = best
    d, r, s, t, pobj = primal
    gap = pobj - val
    return QpResult(
        d=d, r=r, s=s, t=t,
        alpha=lam[:ev.p].copy(), beta=lam[ev.p:].copy(),
        primal_obj=pobj, dual_obj=float(val), gap=float(gap),
        converged=bool(converged or gap <= params.gap_tol), iterations=it,
    )


def identify_qp(ev, params=None):
    """Active-set estimate ``{i : c_i + grad c_i^T d >= -tol_act}`` at the QP step."""
    params = params or QpParams()
    res = solve_penalized_qp(ev, params)
    lin = ev.c_val + ev.jac_c.T @ res.d
    active = kkt.ActiveSet.from_mask(lin >= -params.tol_act)
    return QpResult(**{**res.__dict__, "active_estimate": active})


def _kkt_matrix(ev, active_idx, theta):
    n, p = ev.n, ev.p
    ca = ev.jac_c[:, active_idx]
    size = n + p + len(active_idx)
    k = np.zeros((size, size))
    k[:n, :n] = theta * np.eye(n)
    k[:n, n:n + p] = ev.jac_e
    k[:n, n + p:] = ca
    k[n:n + p, :n] = ev.jac_e.T
    k[n + p:, :n] = ca.T
    rhs = -np.concatenate([ev.grad_f, ev.e_val, ev.c_val[active_idx]])
    return k, rhs


def solve_reduced_kkt(ev, active, theta):
    """Solve the step QP's KKT system with ``active`` constraints held at equality.

    Reports whether the remaining linearized constraints are strictly
    satisfied and whether the active multipliers are strictly positive.
    """
    check_scalar(theta, "theta", lower=0.0, closed="neither")
    idx = [i - 1 for i in active]
    k, rhs = _kkt_matrix(ev, idx, theta)
    fac = lu_factor(k)
    if fac.singular:
        raise RankDeficiencyError("reduced KKT matrix is singular: active gradients are dependent")
    sol = solve(fac, rhs)
    n, p = ev.n, ev.p
    d = sol[:n]
    beta_a = sol[n + p:]
    inactive = np.setdiff1d(np.arange(ev.q), idx)
    lin = ev.c_val[inactive] + ev.jac_c[:, inactive].T @ d
    return ReducedKktSolution(
        d=d,
        alpha=sol[n:n + p],
        beta_active=beta_a,
        active=kkt.ActiveSet(tuple(active), q=ev.q),
        inactive_strict=bool(np.all(lin < 0)),
        beta_positive=bool(np.all(beta_a > 0)),
    )


def enumerate_qp_oracle(ev, theta, return_multipliers=False, feas_tol=1e-9, mult_tol=1e-10):
    """Solve the hard-constrained step QP exactly by enumerating working sets.

    ``min g^T d + theta/2 ||d||^2  s.t.  e + E^T d = 0,  c + C^T d <= 0``.
    Raises :class:`InfeasibleQpError` when the linearized constraints admit no
    point.
    """
    if ev.q > kkt.MAX_ENUMERATION_Q:
        raise kkt.EnumerationLimitError(f"q={ev.q} exceeds enumeration limit")
    if find_feasible_point(ev.jac_e.T, -ev.e_val, ev.jac_c.T, -ev.c_val) is None:
        raise InfeasibleQpError("linearized constraints are infeasible")
    n, p = ev.n, ev.p
    scale = 1.0 + np.max(np.abs(ev.c_val), initial=0.0)
    for size in range(ev.q + 1):
        for subset in itertools.combinations(range(ev.q), size):
            k, rhs = _kkt_matrix(ev, list(subset), theta)
            fac = lu_factor(k)
            if fac.singular:
                continue
            sol = solve(fac, rhs)
            d = sol[:n]
            beta_a = sol[n + p:]
            lin = ev.c_val + ev.jac_c.T @ d
            if np.all(lin <= feas_tol * scale) and np.all(beta_a >= -mult_tol):
                if not return_multipliers:
                    return d
                beta = np.zeros(ev.q)
                beta[list(subset)] = beta_a
                return d, sol[n:n + p], beta
    raise InfeasibleQpError("no working set satisfied the optimality conditions")
