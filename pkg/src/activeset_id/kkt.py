"""KKT residual measures and active-set bookkeeping.

All measures read the values stored in an :class:`~activeset_id.problem.Evaluation`,
so passing a noisy evaluation gives the noisy counterpart of each measure.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from ._validation import as_vector

#: Largest ``q`` accepted by the LPEC enumeration oracle.
MAX_ENUMERATION_Q = 12


class EnumerationLimitError(ValueError):
    pass


@dataclass(frozen=True)
class ActiveSet:
    """Sorted set of 1-based inequality indices."""

    indices: tuple = ()
    q: int = None

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices must be strictly increasing, got {idx}")
        if idx and idx[0] < 1:
            raise ValueError("indices are 1-based")
        if self.q is not None and idx and idx[-1] > self.q:
            raise ValueError(f"index {idx[-1]} exceeds q={self.q}")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_mask(cls, mask):
        mask = np.asarray(mask, dtype=bool)
        return cls(tuple(int(i) + 1 for i in np.flatnonzero(mask)), q=mask.shape[0])

    @classmethod
    def parse(cls, text, q=None):
        """Parse ``"{1,2}"`` or ``"1,2"`` (braces optional)."""
        body = text.strip().strip("{}").strip()
        if not body:
            return cls((), q=q)
        return cls(tuple(sorted(int(tok) for tok in body.split(","))), q=q)

    def mask(self, q=None):
        q = self.q if q is None else q
        out = np.zeros(q, dtype=bool)
        out[[i - 1 for i in self.indices]] = True
        return out

    def __eq__(self, other):
        if isinstance(other, ActiveSet):
            return self.indices == other.indices
        return NotImplemented

    def __hash__(self):
        return hash(self.indices)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i):
        return i in self.indices

    def __and__(self, other):
        return ActiveSet(tuple(sorted(set(self.indices) & set(other.indices))), q=self.q)

    def __sub__(self, other):
        return ActiveSet(tuple(sorted(set(self.indices) - set(other.indices))), q=self.q)

    def __str__(self):
        return "{" + ",".join(str(i) for i in self.indices) + "}"


@dataclass(frozen=True, eq=False)
class MultiplierPair:
    y: np.ndarray
    z: np.ndarray


def _check_dims(ev, m):
    y = np.asarray(m.y, dtype=float).reshape(-1)
    z = np.asarray(m.z, dtype=float).reshape(-1)
    if y.shape[0] != ev.p or z.shape[0] != ev.q:
        raise ValueError(
            f"multipliers have sizes ({y.shape[0]}, {z.shape[0]}), expected ({ev.p}, {ev.q})"
        )
    return y, z


def stationarity(ev, m):
    y, z = _check_dims(ev, m)
    return ev.grad_f + ev.jac_e @ y + ev.jac_c @ z


def psi(ev, m):
    """1-norm of ``[grad L; e; min(z, -c)]``."""
    y, z = _check_dims(ev, m)
    g = ev.grad_f + ev.jac_e @ y + ev.jac_c @ z
    comp = np.minimum(z, -ev.c_val)
    return float(np.abs(g).sum() + np.abs(ev.e_val).sum() + np.abs(comp).sum())


def kappa(ev, m):
    """Stationarity plus equality violation, both in the 1-norm."""
    g = stationarity(ev, m)
    return float(np.abs(g).sum() + np.abs(ev.e_val).sum())


def _split(ev, m):
    y, z = _check_dims(ev, m)
    if np.any(z < 0):
        raise ValueError("rho measures need z >= 0")
    neg = ev.c_val < 0
    return z, neg


def rho(ev, m):
    """``kappa + sum_{c_i<0} -c_i z_i + sum_{c_i>=0} c_i``."""
    z, neg = _split(ev, m)
    c = ev.c_val
    return kappa(ev, m) + float(np.sum(-c[neg] * z[neg]) + np.sum(c[~neg]))


def rho_bar(ev, m):
    """Like :func:`rho` but with ``sqrt(-c_i z_i)`` on the strictly negative part."""
    z, neg = _split(ev, m)
    c = ev.c_val
    prod = np.maximum(0.0, -c[neg] * z[neg])
    return kappa(ev, m) + float(np.sum(np.sqrt(prod)) + np.sum(c[~neg]))


def eps_rho_bar(bounds, n, p, q, m_bar):
    """Error allowance between the exact and noisy ``rho_bar`` for ``||y||, ||z||, ||c|| <= m_bar``."""
    b = bounds
    return (3.0 * np.sqrt(q) * (b.eps_c + np.sqrt(b.eps_c * m_bar))
            + np.sqrt(p) * b.eps_e + np.sqrt(n) * b.eps_grad_f
            + np.sqrt(n) * m_bar * (b.eps_grad_e + b.eps_grad_c))


def eps_rho(bounds, n, p, q, m_bar):
    """Error allowance between the exact and noisy ``rho`` (same setting as :func:`eps_rho_bar`)."""
    b = bounds
    return (q * b.eps_c * (1.0 + m_bar)
            + np.sqrt(p) * b.eps_e + np.sqrt(n) * b.eps_grad_f
            + np.sqrt(n) * m_bar * (b.eps_grad_e + b.eps_grad_c))


def active_set_exact(c_vals, tol=0.0):
    """Indices with ``c_i >= -tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    c = as_vector(c_vals, "c_vals") if np.size(c_vals) else np.zeros(0)
    return ActiveSet.from_mask(c >= -tol)


def omega_bruteforce(ev, z_cap=1e8):
    """Minimize ``psi`` over ``y`` free and ``0 <= z <= z_cap`` by enumerating branches.

    For each ``i`` with ``c_i <= 0`` the complementarity entry ``min(z_i, -c_i)``
    is either ``z_i`` (with ``z_i <= -c_i``) or ``-c_i`` (with ``z_i >= -c_i``);
    indices with ``c_i > 0`` always take ``-c_i``.  Each branch pattern is one
    LP.  Returns ``(value, MultiplierPair)``; ties go to the lowest pattern
    index.
    """
    from .lp import StandardLp, simplex_solve

    if ev.q > MAX_ENUMERATION_Q:
        raise EnumerationLimitError(f"q={ev.q} exceeds enumeration limit {MAX_ENUMERATION_Q}")
    if z_cap <= 0:
        raise ValueError("z_cap must be positive")
    n, p, q = ev.n, ev.p, ev.q
    c = ev.c_val
    free = np.flatnonzero(c <= 0)
    base_const = float(np.abs(ev.e_val).sum())

    # variables: y (p), z (q), r (n), s (n)
    a_eq = np.hstack([ev.jac_e, ev.jac_c, -np.eye(n), np.eye(n)])
    b_eq = -ev.grad_f
    best_val, best = np.inf, None
    for pattern in itertools.product((0, 1), repeat=free.size):
        # pattern bit 1: min attained by z_i
        lo = np.concatenate([np.full(p, -np.inf), np.zeros(q), np.zeros(2 * n)])
        hi = np.concatenate([np.full(p, np.inf), np.full(q, float(z_cap)), np.full(2 * n, np.inf)])
        cost = np.concatenate([np.zeros(p + q), np.ones(2 * n)])
        const = base_const
        z_branch = np.zeros(q, dtype=bool)
        for bit, i in zip(pattern, free):
            z_branch[i] = bool(bit)
        feasible = True
        for i in range(q):
            if z_branch[i]:
                hi[p + i] = min(z_cap, -c[i])
                cost[p + i] = 1.0
            else:
                lo[p + i] = max(0.0, -c[i])
                const += abs(c[i])
                if lo[p + i] > hi[p + i]:
                    feasible = False
        if not feasible:
            continue
        sol = simplex_solve(StandardLp(cost, a_eq, b_eq, lo, hi))
        if sol.status != "optimal":
            continue
        val = sol.objective + const
        if val < best_val:
            best_val = val
            best = MultiplierPair(y=sol.x[:p].copy(), z=sol.x[p:p + q].copy())
    if best is None:
        raise RuntimeError("no LPEC branch produced an optimal LP")
    return float(best_val), best
