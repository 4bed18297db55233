"""Small dense linear algebra kernels.

Vectors and matrices are plain ``numpy.ndarray`` objects (1-D and 2-D,
float64).  This module adds an LU factorization with partial pivoting, a
matching solve, infinity-norm helpers and a checker for the classical
perturbation bound on solutions of linear systems.
"""

from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix, as_vector

#: Relative pivot threshold used to flag a factorization as singular.
PIVOT_RTOL = 1e-12


class DimensionError(ValueError):
    """Raised when array shapes do not conform."""


class SingularMatrixError(ArithmeticError):
    """Raised when solving with a factorization flagged as singular."""


@dataclass(frozen=True)
class LuFactorization:
    """Packed LU factors of a square matrix with row pivoting.

    ``lu`` holds the unit lower triangle (strictly below the diagonal) and
    the upper triangle ``U``.  ``perm`` maps rows of ``P @ A`` to rows of
    ``A``, i.e. ``A[perm] == L @ U``.
    """

    lu: np.ndarray
    perm: np.ndarray
    singular: bool

    @property
    def n(self):
        return self.lu.shape[0]

    @property
    def L(self):
        return np.tril(self.lu, -1) + np.eye(self.n)

    @property
    def U(self):
        return np.triu(self.lu)

    @property
    def P(self):
        """Permutation matrix with ``P @ A == L @ U``."""
        return np.eye(self.n)[self.perm]


def inf_norm(a):
    """Infinity norm of a vector, or the induced (max row sum) norm of a matrix."""
    a = np.asarray(a, dtype=float)
    if a.size == 0:
        return 0.0
    if a.ndim == 1:
        return float(np.max(np.abs(a)))
    return float(np.max(np.sum(np.abs(a), axis=1)))


def lu_factor(a):
    """Factor a square matrix as ``P A = L U`` using partial pivoting.

    A pivot whose magnitude falls below ``PIVOT_RTOL * max|a_ij|`` marks the
    factorization singular; elimination still runs to completion so the
    factors can be inspected.
    """
    a = as_matrix(a, "a")
    n, m = a.shape
    if n != m:
        raise DimensionError(f"lu_factor needs a square matrix, got {n}x{m}")
    lu = a.copy()
    perm = np.arange(n)
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    threshold = PIVOT_RTOL * scale
    singular = scale == 0.0 and n > 0
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        pivot = lu[k, k]
        if abs(pivot) <= threshold:
            singular = True
            continue
        lu[k + 1:, k] /= pivot
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return LuFactorization(lu=lu, perm=perm, singular=bool(singular))


def solve(fac, b):
    """Solve ``A x = b`` given ``fac = lu_factor(A)``.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).
    """
    if fac.singular:
        raise SingularMatrixError("matrix is numerically singular")
    b = np.asarray(b, dtype=float)
    if b.shape[0] != fac.n:
        raise DimensionError(f"right-hand side has {b.shape[0]} rows, expected {fac.n}")
    y = b[fac.perm].copy()
    lu = fac.lu
    n = fac.n
    for i in range(n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - lu[i, i + 1:] @ y[i + 1:]) / lu[i, i]
    return y


def inverse(a):
    fac = lu_factor(a)
    return solve(fac, np.eye(fac.n))


def cond_inf(a):
    """Condition number ``||A|| ||A^-1||`` in the infinity-induced norm."""
    a = as_matrix(a, "a")
    return inf_norm(a) * inf_norm(inverse(a))


def perturbation_bound_holds(k, dk, b, db):
    """Check the relative-error bound for a perturbed linear system.

    With ``K v = b`` and ``(K + dK) w = b + db``, returns whether

        ||v - w|| / ||v|| <= cond(K) / (1 - ||dK|| ||K^-1||)
                             * (||dK|| / ||K|| + ||db|| / ||b||)

    holds in the infinity norm.  Raises ``ValueError`` if ``K`` is singular,
    ``b`` is zero, or ``||dK|| ||K^-1|| >= 1``.
    """
    k = as_matrix(k, "k")
    dk = as_matrix(dk, "dk")
    b = as_vector(b, "b")
    db = as_vector(db, "db")
    n = k.shape[0]
    if k.shape != (n, n) or dk.shape != (n, n) or b.shape != (n,) or db.shape != (n,):
        raise DimensionError("perturbation_bound_holds: shapes do not conform")
    fac = lu_factor(k)
    if fac.singular:
        raise ValueError("K must be nonsingular")
    b_norm = inf_norm(b)
    if b_norm == 0.0:
        raise ValueError("b must be nonzero")
    k_inv_norm = inf_norm(solve(fac, np.eye(n)))
    k_norm = inf_norm(k)
    dk_norm = inf_norm(dk)
    contraction = dk_norm * k_inv_norm
    if contraction >= 1.0:
        raise ValueError(f"||dK|| ||K^-1|| = {contraction:.3g} must be < 1")

    v = solve(fac, b)
    w = solve(lu_factor(k + dk), b + db)
    lhs = inf_norm(v - w) / inf_norm(v)
    rhs = k_norm * k_inv_norm / (1.0 - contraction) * (dk_norm / k_norm + inf_norm(db) / b_norm)
    # roundoff allowance: the computed v, w carry O(cond * eps) error themselves
    slack = 64 * np.finfo(float).eps * k_norm * k_inv_norm
    return bool(lhs <= rhs + slack)
