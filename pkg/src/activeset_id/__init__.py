"""Active-set identification for constrained optimization with noisy evaluations.

Two identifiers are provided: a multiplier-based one built on an LP
(:func:`identify_lp`) and a primal-step one built on a penalized QP
(:func:`identify_qp`), plus scikit-learn style wrappers, experiment drivers
and the ``activeset-id`` command line tool.
"""

from .estimators import LpLpecIdentifier, QpIdentifier
from .experiments import GridConfig, TrajectoryConfig, run_grid, run_trajectory, success_statistics
from .kkt import ActiveSet, MultiplierPair, kappa, psi, rho, rho_bar
from .lp import LpLpecParams, identify_lp, simplex_solve
from .problem import (ErrorBounds, Evaluation, NoiseSpec, ProblemOracle, evaluate_exact, evaluate_noisy,
                      make_parabola_problem)
from .qp import QpParams, identify_qp, solve_penalized_qp

__version__ = "0.1.0"

__all__ = [
    "ActiveSet", "ErrorBounds", "Evaluation", "GridConfig", "LpLpecIdentifier", "LpLpecParams",
    "MultiplierPair", "NoiseSpec", "ProblemOracle", "QpIdentifier", "QpParams", "TrajectoryConfig",
    "evaluate_exact", "evaluate_noisy", "identify_lp", "identify_qp", "kappa", "make_parabola_problem",
    "psi", "rho", "rho_bar", "run_grid", "run_trajectory", "simplex_solve", "solve_penalized_qp",
    "success_statistics",
]
