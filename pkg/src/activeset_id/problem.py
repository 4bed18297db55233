"""Problem oracles, noisy evaluations and the built-in two-dimensional problems.

A problem has the form::

    min f(x)  s.t.  e(x) = 0,  c(x) <= 0

with ``x`` in R^n, ``e`` in R^p and ``c`` in R^q.  Jacobians are stored
column-wise, so ``jac_e`` is ``n x p`` and its ``j``-th column is the
gradient of ``e_j``.
"""

import itertools
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from ._validation import as_vector, check_scalar
from .numerics import lu_factor, solve


@dataclass(frozen=True)
class ProblemOracle:
    """First-order oracle for a smooth constrained problem."""

    n: int
    p: int
    q: int
    f: callable
    e: callable
    c: callable
    grad_f: callable
    jac_e: callable
    jac_c: callable
    name: str = "custom"


@dataclass(frozen=True)
class ErrorBounds:
    """Norm bounds on the error of each evaluated quantity."""

    eps_f: float = 0.0
    eps_e: float = 0.0
    eps_c: float = 0.0
    eps_grad_f: float = 0.0
    eps_grad_e: float = 0.0
    eps_grad_c: float = 0.0

    def __post_init__(self):
        for name, value in self.as_dict().items():
            if value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")

    def as_dict(self):
        return {
            "eps_f": self.eps_f,
            "eps_e": self.eps_e,
            "eps_c": self.eps_c,
            "eps_grad_f": self.eps_grad_f,
            "eps_grad_e": self.eps_grad_e,
            "eps_grad_c": self.eps_grad_c,
        }

    def as_array(self):
        return np.array(list(self.as_dict().values()))

    @classmethod
    def for_uniform_noise(cls, level, n, p, q):
        """Worst-case bounds implied by entrywise noise in ``[-level, level]``.

        Vector errors are measured in the 2-norm and Jacobian errors in the
        infinity-induced norm (max absolute row sum of an ``n x p`` matrix).
        """
        return cls(
            eps_f=level,
            eps_e=np.sqrt(p) * level,
            eps_c=np.sqrt(q) * level,
            eps_grad_f=np.sqrt(n) * level,
            eps_grad_e=p * level,
            eps_grad_c=q * level,
        )


@dataclass(frozen=True)
class NoiseSpec:
    """Entrywise uniform noise on ``[-level, level]`` drawn from a seeded PCG64 stream.

    Draw order is fixed: f, e, c, grad_f, then jac_e and jac_c in row-major
    order.  The same seed always reproduces the same perturbation.
    """

    level: float
    seed: int = 0

    def __post_init__(self):
        check_scalar(self.level, "level", lower=0.0)
        object.__setattr__(self, "seed", int(self.seed) & (2**64 - 1))


@dataclass(frozen=True, eq=False)
class Evaluation:
    """Snapshot of (possibly noisy) function and derivative values at ``x``."""

    x: np.ndarray
    f_val: float
    e_val: np.ndarray
    c_val: np.ndarray
    grad_f: np.ndarray
    jac_e: np.ndarray
    jac_c: np.ndarray
    bounds: ErrorBounds = field(default_factory=ErrorBounds)

    @property
    def n(self):
        return self.grad_f.shape[0]

    @property
    def p(self):
        return self.e_val.shape[0]

    @property
    def q(self):
        return self.c_val.shape[0]

    @property
    def is_exact(self):
        return not np.any(self.bounds.as_array())

    def arrays(self):
        return (self.x, np.array([self.f_val]), self.e_val, self.c_val,
                self.grad_f, self.jac_e, self.jac_c)

    def same_values(self, other):
        """Bitwise equality of every stored array."""
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.arrays(), other.arrays())
        )


def make_evaluation(grad_f, jac_e, jac_c, e_val, c_val, *, x=None, f_val=0.0, bounds=None):
    """Build an Evaluation from raw arrays (used for synthetic instances)."""
    grad_f = as_vector(grad_f, "grad_f")
    n = grad_f.shape[0]
    e_val = as_vector(e_val, "e_val") if np.size(e_val) else np.zeros(0)
    c_val = as_vector(c_val, "c_val") if np.size(c_val) else np.zeros(0)
    jac_e = np.asarray(jac_e, dtype=float).reshape(n, e_val.shape[0])
    jac_c = np.asarray(jac_c, dtype=float).reshape(n, c_val.shape[0])
    if not (np.all(np.isfinite(jac_e)) and np.all(np.isfinite(jac_c))):
        raise ValueError("Jacobians contain NaN or infinite entries")
    x = np.zeros(n) if x is None else as_vector(x, "x", n)
    return Evaluation(x=x, f_val=float(f_val), e_val=e_val, c_val=c_val, grad_f=grad_f,
                      jac_e=jac_e, jac_c=jac_c, bounds=bounds or ErrorBounds())


def derive_seed(master, *indices):
    """Deterministic 64-bit child seed for ``(master, *indices)``."""
    ss = np.random.SeedSequence([int(master) & (2**64 - 1), *[int(i) for i in indices]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def evaluate_exact(oracle, x):
    x = as_vector(x, "x", oracle.n)
    n, p, q = oracle.n, oracle.p, oracle.q
    ev = Evaluation(
        x=x,
        f_val=float(oracle.f(x)),
        e_val=np.asarray(oracle.e(x), dtype=float).reshape(p),
        c_val=np.asarray(oracle.c(x), dtype=float).reshape(q),
        grad_f=np.asarray(oracle.grad_f(x), dtype=float).reshape(n),
        jac_e=np.asarray(oracle.jac_e(x), dtype=float).reshape(n, p),
        jac_c=np.asarray(oracle.jac_c(x), dtype=float).reshape(n, q),
    )
    return ev


def perturb(ev, spec):
    """Add entrywise uniform noise to every value of an Evaluation."""
    if spec.level == 0.0:
        return ev
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    eps = spec.level

    def draw(shape):
        return rng.uniform(-eps, eps, size=shape)

    f_val = ev.f_val + float(draw(()))
    e_val = ev.e_val + draw(ev.e_val.shape)
    c_val = ev.c_val + draw(ev.c_val.shape)
    grad_f = ev.grad_f + draw(ev.grad_f.shape)
    jac_e = ev.jac_e + draw(ev.jac_e.shape)
    jac_c = ev.jac_c + draw(ev.jac_c.shape)
    bounds = ErrorBounds.for_uniform_noise(eps, ev.n, ev.p, ev.q)
    return replace(ev, f_val=f_val, e_val=e_val, c_val=c_val, grad_f=grad_f,
                   jac_e=jac_e, jac_c=jac_c, bounds=bounds)


def evaluate_noisy(oracle, x, spec):
    return perturb(evaluate_exact(oracle, x), spec)


def penalty_objective(oracle, x, mu):
    """Quadratic penalty ``f + mu/2 (||e||^2 + ||[c]_+||^2)`` and its gradient."""
    mu = check_scalar(mu, "mu", lower=0.0, closed="neither")
    ev = evaluate_exact(oracle, x)
    c_plus = np.maximum(ev.c_val, 0.0)
    value = ev.f_val + 0.5 * mu * (ev.e_val @ ev.e_val + c_plus @ c_plus)
    grad = ev.grad_f + mu * (ev.jac_e @ ev.e_val + ev.jac_c @ c_plus)
    return float(value), grad


# ---------------------------------------------------------------------------
# Built-in test problems


@dataclass(frozen=True)
class TestProblem:
    oracle: ProblemOracle
    x_star: np.ndarray = None
    a_star: object = None  # kkt.ActiveSet

    __test__ = False  # keep pytest from collecting this class

    @property
    def name(self):
        return self.oracle.name


def _parabola_constraints(x):
    return np.array([x[0] ** 2 - x[1], x[0] ** 2 + x[1] - 0.5])


def _parabola_jacobian(x):
    return np.array([[2.0 * x[0], 2.0 * x[0]], [-1.0, 1.0]])


_OBJECTIVES = {
    "f1": (
        lambda x: (x[0] + 0.5) ** 2 + 4.0 * (x[1] - 0.5) ** 2,
        lambda x: np.array([2.0 * (x[0] + 0.5), 8.0 * (x[1] - 0.5)]),
    ),
    "f2": (
        lambda x: 4.0 * (x[0] + 0.6) ** 2 + (x[1] - 0.25) ** 2,
        lambda x: np.array([8.0 * (x[0] + 0.6), 2.0 * (x[1] - 0.25)]),
    ),
}

PROBLEM_NAMES = tuple(_OBJECTIVES)


def parabola_oracle(which):
    """Oracle for ``min f_which(x)`` between the parabolas ``x2 = x1^2`` and ``x2 = 1/2 - x1^2``."""
    if which not in _OBJECTIVES:
        raise ValueError(f"unknown problem {which!r}; choose from {PROBLEM_NAMES}")
    f, grad_f = _OBJECTIVES[which]
    return ProblemOracle(
        n=2, p=0, q=2,
        f=f,
        e=lambda x: np.zeros(0),
        c=_parabola_constraints,
        grad_f=grad_f,
        jac_e=lambda x: np.zeros((2, 0)),
        jac_c=_parabola_jacobian,
        name=which,
    )


def _lagrangian_hessian_fd(oracle, x, y, z, h=1e-6):
    """Central differences of the Lagrangian gradient (exact first derivatives)."""
    def grad_lag(pt):
        return oracle.grad_f(pt) + np.asarray(oracle.jac_e(pt)).reshape(oracle.n, oracle.p) @ y \
            + np.asarray(oracle.jac_c(pt)).reshape(oracle.n, oracle.q) @ z

    hess = np.empty((oracle.n, oracle.n))
    for j in range(oracle.n):
        step = np.zeros(oracle.n)
        step[j] = h
        hess[:, j] = (grad_lag(x + step) - grad_lag(x - step)) / (2 * h)
    return 0.5 * (hess + hess.T)


def _newton_kkt(oracle, x0, active, max_iter=60, tol=1e-13):
    """Newton's method on the KKT system with the given constraints held active."""
    n, p = oracle.n, oracle.p
    act = list(active)
    x = x0.copy()
    # least-squares multiplier estimate keeps the first KKT matrix nonsingular
    # when the objective is linear
    ev = evaluate_exact(oracle, x)
    w, *_ = np.linalg.lstsq(np.hstack([ev.jac_e, ev.jac_c[:, act]]), -ev.grad_f, rcond=None)
    y, z_a = w[:p], w[p:]
    for _ in range(max_iter):
        ev = evaluate_exact(oracle, x)
        ca = ev.jac_c[:, act]
        z = np.zeros(oracle.q)
        z[act] = z_a
        resid = np.concatenate([ev.grad_f + ev.jac_e @ y + ca @ z_a, ev.e_val, ev.c_val[act]])
        if np.max(np.abs(resid), initial=0.0) <= tol:
            return x, y, z
        k = np.zeros((n + p + len(act),) * 2)
        k[:n, :n] = _lagrangian_hessian_fd(oracle, x, y, z)
        k[:n, n:n + p] = ev.jac_e
        k[:n, n + p:] = ca
        k[n:n + p, :n] = ev.jac_e.T
        k[n + p:, :n] = ca.T
        fac = lu_factor(k)
        if fac.singular:
            return None
        step = solve(fac, -resid)
        x = x + step[:n]
        y = y + step[n:n + p]
        z_a = z_a + step[n + p:]
        if not np.all(np.isfinite(x)):
            return None
    return None


def reference_minimizer(oracle, lower, upper, resolution=201):
    """Locate a minimizer by grid search followed by active-set Newton refinement.

    Every subset of inequality constraints is tried as the working set from
    the best feasible grid point; the lowest-objective KKT point (feasible,
    nonnegative multipliers) wins.
    """
    axes = [np.linspace(lo, hi, resolution) for lo, hi in zip(lower, upper)]
    best, best_f = None, np.inf
    for pt in itertools.product(*axes):
        pt = np.array(pt)
        if np.all(oracle.c(pt) <= 0) and np.all(np.abs(oracle.e(pt)) <= 1e-2):
            val = oracle.f(pt)
            if val < best_f:
                best, best_f = pt, val
    if best is None:
        raise RuntimeError("no feasible grid point found")

    candidates = []
    for size in range(oracle.q + 1):
        for active in itertools.combinations(range(oracle.q), size):
            out = _newton_kkt(oracle, best, active)
            if out is None:
                continue
            x, y, z = out
            if np.all(oracle.c(x) <= 1e-10) and np.all(z >= -1e-12):
                candidates.append((float(oracle.f(x)), x))
    if not candidates:
        raise RuntimeError("active-set refinement failed from every working set")
    return min(candidates, key=lambda item: item[0])[1]


@lru_cache(maxsize=None)
def _parabola_solution(which):
    oracle = parabola_oracle(which)
    return reference_minimizer(oracle, lower=(-1.0, -0.5), upper=(1.0, 1.0))


def make_parabola_problem(which):
    from .kkt import active_set_exact

    oracle = parabola_oracle(which)
    x_star = _parabola_solution(which).copy()
    x_star.setflags(write=False)
    a_star = active_set_exact(_parabola_constraints(x_star), 1e-8)
    return TestProblem(oracle=oracle, x_star=x_star, a_star=a_star)
