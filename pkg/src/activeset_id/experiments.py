"""Experiment drivers: success-fraction grids and penalty-descent traces.

Both drivers are deterministic given the master seed.  Noise for grid
point ``k`` and trial ``t`` is seeded by ``derive_seed(seed, k, t)``, so the
same uniform draws (scaled by ``eps``) are reused across noise levels and
results do not depend on evaluation order or worker count.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._validation import as_vector, check_scalar
from .estimators import resolve_problem
from .lp import IdentificationError, LpLpecParams, identify_lp
from .problem import NoiseSpec, derive_seed, evaluate_exact, perturb, penalty_objective
from .qp import QpParams, identify_qp

METHODS = ("lp", "qp")

#: Fixed start points for penalty-descent traces.
START_POINTS = {"f1": (0.4, 0.3), "f2": (0.3, 0.6)}

#: Relative slack when deciding whether a lattice point lies inside an inf-norm ball.
RADIUS_RTOL = 1e-9

THREADS_ENV = "ACTIVESET_ID_THREADS"


class ConfigError(ValueError):
    pass


class EmptyRegionError(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


def worker_count(requested=None):
    """Number of worker processes, capped by ``ACTIVESET_ID_THREADS`` when set."""
    n = (os.cpu_count() or 1) if requested is None else int(requested)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


def _inside(offsets, radius):
    return np.max(np.abs(offsets), axis=-1) <= radius * (1.0 + RADIUS_RTOL)


@dataclass
class GridConfig:
    """Success-fraction sweep around ``center`` (defaults to the problem's ``x_star``).

    ``window``, when set, restricts evaluation to lattice points within that
    inf-norm radius of the center; the lattice itself and the per-point seeds
    are unchanged.
    """

    problem: object = "f1"
    center: np.ndarray = None
    half_width: float = 0.4
    resolution: int = 81
    noise_levels: tuple = (0.0, 1e-2, 1e-1)
    trials: int = 8
    lp_params: LpLpecParams = field(default_factory=LpLpecParams)
    qp_params: QpParams = field(default_factory=QpParams)
    seed: int = 0
    window: float = None
    workers: int = None

    def validate(self):
        prob = resolve_problem(self.problem)
        if prob.a_star is None:
            raise ConfigError(f"problem {prob.name!r} has no reference active set")
        if prob.oracle.n != 2:
            raise ConfigError("grid sweeps need a two-dimensional problem")
        if int(self.resolution) < 2:
            raise ConfigError("resolution must be at least 2")
        if not self.half_width > 0:
            raise ConfigError("half_width must be positive")
        if int(self.trials) < 1:
            raise ConfigError("trials must be at least 1")
        if self.window is not None and not self.window > 0:
            raise ConfigError("window must be positive")
        if not self.noise_levels:
            raise ConfigError("at least one noise level is needed")
        for eps in self.noise_levels:
            check_scalar(eps, "eps", lower=0.0)
        center = prob.x_star if self.center is None else as_vector(self.center, "center", 2)
        if center is None:
            raise ConfigError("no center given and the problem has no x_star")
        return prob, center

    def trials_for(self, eps):
        return 1 if eps == 0 else int(self.trials)


@dataclass(frozen=True)
class GridCell:
    point: tuple
    eps: float
    trials: int
    success: dict  # method -> fraction in [0, 1]
    index: int = 0


def _estimates(ev, lp_params, qp_params):
    out = {}
    try:
        out["lp"] = identify_lp(ev, lp_params).active_estimate
    except IdentificationError:
        out["lp"] = None
    out["qp"] = identify_qp(ev, qp_params).active_estimate
    return out


def _grid_points(cfg, center):
    axis = np.linspace(-cfg.half_width, cfg.half_width, int(cfg.resolution))
    pts = []
    for i, dx in enumerate(axis):
        for j, dy in enumerate(axis):
            k = i * int(cfg.resolution) + j
            off = np.array([dx, dy])
            if cfg.window is None or _inside(off, cfg.window):
                pts.append((k, center + off))
    return pts


def _run_points(args):
    chunk, cfg = args
    prob = resolve_problem(cfg.problem)
    cells = []
    for k, x in chunk:
        exact = evaluate_exact(prob.oracle, x)
        for eps in cfg.noise_levels:
            n_trials = cfg.trials_for(eps)
            hits = dict.fromkeys(METHODS, 0)
            for t in range(n_trials):
                ev = perturb(exact, NoiseSpec(eps, derive_seed(cfg.seed, k, t)))
                est = _estimates(ev, cfg.lp_params, cfg.qp_params)
                for m in METHODS:
                    hits[m] += int(est[m] == prob.a_star)
            cells.append(GridCell(point=(float(x[0]), float(x[1])), eps=float(eps), trials=n_trials,
                                  success={m: hits[m] / n_trials for m in METHODS}, index=k))
    return cells


def run_grid(cfg):
    """Run both identifiers at every lattice point and noise level.

    Returns cells ordered by lattice index, then by position in
    ``cfg.noise_levels``.
    """
    _, center = cfg.validate()
    pts = _grid_points(cfg, center)
    workers = min(worker_count(cfg.workers), max(1, len(pts)))
    # custom oracles are usually closures, which do not pickle
    if workers == 1 or not isinstance(cfg.problem, str):
        return _run_points((pts, cfg))
    chunks = [pts[w::workers] for w in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_points, [(ch, cfg) for ch in chunks]))
    order = {eps: i for i, eps in enumerate(cfg.noise_levels)}
    cells = [c for part in parts for c in part]
    cells.sort(key=lambda c: (c.index, order[c.eps]))
    return cells


def success_statistics(cells, radius, center):
    """Mean success fraction per ``(method, eps)`` over cells within ``radius`` of ``center``."""
    check_scalar(radius, "radius", lower=0.0, closed="neither")
    center = as_vector(center, "center")
    sums = {}
    for cell in cells:
        if not _inside(np.asarray(cell.point) - center, radius):
            continue
        for m, frac in cell.success.items():
            tot, cnt = sums.get((m, cell.eps), (0.0, 0))
            sums[(m, cell.eps)] = (tot + frac, cnt + 1)
    if not sums:
        raise EmptyRegionError(f"no cells within radius {radius} of {center.tolist()}")
    return {key: tot / cnt for key, (tot, cnt) in sorted(sums.items())}


# ---------------------------------------------------------------------------
# Penalty-descent traces


@dataclass
class TrajectoryConfig:
    """Gradient descent with Armijo backtracking on the quadratic penalty.

    ``noise_level == 0`` is exact mode.  Otherwise each iterate gets
    ``trials`` fresh noisy evaluations for the identifiers, while the
    descent itself always uses exact values.
    """

    problem: object = "f1"
    mu: float = 1e2
    step_init: float = 1.0
    shrink: float = 0.5
    slope: float = 1e-4
    grad_tol: float = 1e-6
    max_iter: int = 20000
    noise_level: float = 0.0
    trials: int = 10
    lp_params: LpLpecParams = field(default_factory=LpLpecParams)
    qp_params: QpParams = field(default_factory=QpParams)
    seed: int = 0
    start: np.ndarray = None
    divergence_cap: float = 1e12

    def validate(self):
        prob = resolve_problem(self.problem)
        if prob.a_star is None:
            raise ConfigError(f"problem {prob.name!r} has no reference active set")
        check_scalar(self.mu, "mu", lower=0.0, closed="neither")
        check_scalar(self.grad_tol, "grad_tol", lower=0.0, closed="neither")
        check_scalar(self.shrink, "shrink", lower=0.0, upper=1.0, closed="neither")
        check_scalar(self.slope, "slope", lower=0.0, upper=1.0, closed="neither")
        check_scalar(self.step_init, "step_init", lower=0.0, closed="neither")
        check_scalar(self.noise_level, "noise_level", lower=0.0)
        if int(self.max_iter) < 0 or int(self.trials) < 1:
            raise ConfigError("max_iter must be >= 0 and trials >= 1")
        if self.start is not None:
            start = as_vector(self.start, "start", prob.oracle.n)
        elif prob.name in START_POINTS:
            start = np.array(START_POINTS[prob.name], dtype=float)
        else:
            raise ConfigError(f"no default start point for problem {prob.name!r}")
        return prob, start


@dataclass(frozen=True)
class TraceRecord:
    """Identification summary at one iterate.

    ``correct`` is the mean of ``|estimate & a_star|``, ``spurious`` the mean
    of ``|estimate - a_star|`` and ``exact_match`` the fraction of trials whose
    estimate equals ``a_star`` (all keyed by method).
    """

    iteration: int
    x: tuple
    objective: float
    grad_norm: float
    correct: dict
    spurious: dict
    exact_match: dict


def _trace_record(k, x, val, gnorm, prob, cfg):
    exact = evaluate_exact(prob.oracle, x)
    n_trials = 1 if cfg.noise_level == 0 else int(cfg.trials)
    corr = dict.fromkeys(METHODS, 0.0)
    spur = dict.fromkeys(METHODS, 0.0)
    match = dict.fromkeys(METHODS, 0.0)
    for t in range(n_trials):
        ev = perturb(exact, NoiseSpec(cfg.noise_level, derive_seed(cfg.seed, k, t)))
        est = _estimates(ev, cfg.lp_params, cfg.qp_params)
        for m in METHODS:
            if est[m] is None:
                continue
            corr[m] += len(est[m] & prob.a_star)
            spur[m] += len(est[m] - prob.a_star)
            match[m] += float(est[m] == prob.a_star)
    scale = 1.0 / n_trials
    return TraceRecord(
        iteration=k, x=tuple(float(v) for v in x), objective=val, grad_norm=gnorm,
        correct={m: corr[m] * scale for m in METHODS},
        spurious={m: spur[m] * scale for m in METHODS},
        exact_match={m: match[m] * scale for m in METHODS},
    )


def run_trajectory(cfg):
    """Descend on the penalty function and identify at every iterate.

    Stops when the gradient norm drops to ``grad_tol`` or after ``max_iter``
    steps.  Raises :class:`DivergenceError` if the penalty value exceeds
    ``divergence_cap``.
    """
    prob, x = cfg.validate()
    oracle = prob.oracle
    records = []
    val, grad = penalty_objective(oracle, x, cfg.mu)
    for k in range(int(cfg.max_iter) + 1):
        if not np.isfinite(val) or abs(val) > cfg.divergence_cap:
            raise DivergenceError(f"penalty value {val:.3e} at iteration {k} exceeds "
                                  f"{cfg.divergence_cap:.0e}; x = {x.tolist()}")
        gnorm = float(np.linalg.norm(grad))
        records.append(_trace_record(k, x, val, gnorm, prob, cfg))
        if gnorm <= cfg.grad_tol or k == int(cfg.max_iter):
            break
        step = cfg.step_init
        while True:
            x_new = x - step * grad
            v_new, g_new = penalty_objective(oracle, x_new, cfg.mu)
            if v_new <= val - cfg.slope * step * gnorm ** 2 or step < 1e-16:
                break
            step *= cfg.shrink
        x, val, grad = x_new, v_new, g_new
    return records
