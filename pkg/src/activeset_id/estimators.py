"""scikit-learn style front ends for the two identifiers.

Each estimator is bound to a problem (a built-in name, a
:class:`~activeset_id.problem.TestProblem` or a bare
:class:`~activeset_id.problem.ProblemOracle`).  Rows of ``X`` are primal
points; ``predict`` returns one 0/1 indicator row per point (column ``i``
is constraint ``i + 1``), ``transform`` returns the signed activity margins
behind those indicators and ``score`` is the exact-match rate against a
reference active set.

>>> est = QpIdentifier(problem="f2").fit()
>>> est.predict([est.problem_.x_star]).tolist()
[[1, 1]]
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import kkt
from ._validation import check_points, check_scalar
from .lp import IdentificationError, LpLpecParams, identify_lp
from .problem import NoiseSpec, ProblemOracle, TestProblem, derive_seed, evaluate_noisy, make_parabola_problem
from .qp import QpParams, identify_qp


def resolve_problem(problem):
    """Turn a name, TestProblem or ProblemOracle into a TestProblem."""
    if isinstance(problem, TestProblem):
        return problem
    if isinstance(problem, ProblemOracle):
        return TestProblem(oracle=problem)
    if isinstance(problem, str):
        return make_parabola_problem(problem)
    raise TypeError(f"cannot interpret {problem!r} as a problem")


class _IdentifierBase(BaseEstimator):

    def _params(self):
        raise NotImplementedError

    def _run(self, ev, params):
        raise NotImplementedError

    def _margins(self, ev, result, params):
        raise NotImplementedError

    def fit(self, X=None, y=None):
        """Validate hyperparameters and bind the problem.  ``X`` and ``y`` are ignored."""
        check_scalar(self.noise, "noise", lower=0.0)
        self.params_ = self._params()
        self.problem_ = resolve_problem(self.problem)
        self.n_features_in_ = self.problem_.oracle.n
        self.n_constraints_ = self.problem_.oracle.q
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit() first")

    def evaluation(self, x, row=0, trial=0):
        spec = NoiseSpec(self.noise, derive_seed(self.random_state, row, trial))
        return evaluate_noisy(self.problem_.oracle, x, spec)

    def identify(self, ev):
        """Run the identifier on one Evaluation and return the full result object."""
        self._check_fitted()
        return self._run(ev, self.params_)

    def transform(self, X):
        """Activity margins; constraint ``i`` is estimated active iff its margin is >= 0."""
        self._check_fitted()
        X = check_points(X, self.n_features_in_)
        out = np.empty((X.shape[0], self.n_constraints_))
        for k, x in enumerate(X):
            ev = self.evaluation(x, row=k)
            try:
                out[k] = self._margins(ev, self._run(ev, self.params_), self.params_)
            except IdentificationError:
                out[k] = np.nan
        return out

    def predict(self, X):
        self._check_fitted()
        X = check_points(X, self.n_features_in_)
        out = np.zeros((X.shape[0], self.n_constraints_), dtype=int)
        for k, x in enumerate(X):
            try:
                out[k] = self._run(self.evaluation(x, row=k), self.params_).active_estimate.mask(
                    self.n_constraints_)
            except IdentificationError:
                out[k] = -1
        return out

    def score(self, X, y=None):
        """Fraction of points whose estimate equals ``y`` (default: the problem's optimal active set)."""
        pred = self.predict(X)
        if y is None:
            if self.problem_.a_star is None:
                raise ValueError("problem has no known optimal active set; pass y")
            y = np.tile(self.problem_.a_star.mask(self.n_constraints_), (pred.shape[0], 1))
        y = np.asarray(y, dtype=int).reshape(pred.shape)
        return float(np.mean(np.all(pred == y, axis=1)))


class LpLpecIdentifier(_IdentifierBase):
    """Multiplier-based identification (LP approximation of the LPEC).

    Parameters
    ----------
    problem : str, TestProblem or ProblemOracle
    M : float
        Box bound on the inequality multipliers.
    beta, sigma : float
        Threshold scale and exponent, ``0 < sigma < 1``.
    noise : float
        Entrywise uniform noise level applied to each evaluation.
    random_state : int
        Master seed for the noise.
    """

    def __init__(self, problem="f1", M=1e8, beta=0.7071, sigma=0.7, noise=0.0, random_state=0):
        self.problem = problem
        self.M = M
        self.beta = beta
        self.sigma = sigma
        self.noise = noise
        self.random_state = random_state

    def _params(self):
        return LpLpecParams(M=self.M, beta=self.beta, sigma=self.sigma)

    def _run(self, ev, params):
        return identify_lp(ev, params)

    def _margins(self, ev, result, params):
        return ev.c_val - result.threshold


class QpIdentifier(_IdentifierBase):
    """Primal-step identification through the penalized step QP.

    Parameters
    ----------
    problem : str, TestProblem or ProblemOracle
    theta : float
        Proximal weight on the step.
    nu : float
        Penalty on linearized constraint violation.
    gap_tol : float
        Duality-gap target of the dual solver.
    tol_act : float
        Activity band on the linearized constraints.
    max_iter : int
    noise, random_state
        As for :class:`LpLpecIdentifier`.
    """

    def __init__(self, problem="f1", theta=5.0, nu=100.0, gap_tol=1e-8, tol_act=1e-8,
                 max_iter=5000, noise=0.0, random_state=0):
        self.problem = problem
        self.theta = theta
        self.nu = nu
        self.gap_tol = gap_tol
        self.tol_act = tol_act
        self.max_iter = max_iter
        self.noise = noise
        self.random_state = random_state

    def _params(self):
        return QpParams(theta=self.theta, nu=self.nu, gap_tol=self.gap_tol,
                        max_iter=self.max_iter, tol_act=self.tol_act)

    def _run(self, ev, params):
        return identify_qp(ev, params)

    def _margins(self, ev, result, params):
        return ev.c_val + ev.jac_c.T @ result.d + params.tol_act


__all__ = ["LpLpecIdentifier", "QpIdentifier", "resolve_problem", "kkt"]
