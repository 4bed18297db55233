"""``activeset-id`` command-line front end.

Config files are flat ``key = value`` text: one pair per line, ``#`` starts
a comment, blank lines are ignored, keys are the long flag names with
dashes or underscores, lists are comma separated and booleans are
``true``/``false``.  Values are resolved as built-in defaults, then the
file, then flags.

Exit codes: 0 success, 1 usage error, 2 solver or verification failure.
"""

import argparse
import csv
import io
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import kkt, verify
from .experiments import (METHODS, ConfigError, DivergenceError, GridConfig, TrajectoryConfig,
                          run_grid, run_trajectory)
from .estimators import resolve_problem
from .lp import IdentificationError, LpLpecParams, identify_lp
from .problem import PROBLEM_NAMES, NoiseSpec, derive_seed, evaluate_noisy
from .qp import QpParams, identify_qp

SUBCOMMANDS = ("heatmap", "trajectory", "identify", "verify")
EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2
HEATMAP_COLUMNS = ("x1", "x2", "method", "eps", "success_fraction")


class UsageError(Exception):
    pass


class CsvFormatError(ValueError):
    pass


def _fmt(v):
    return format(float(v), ".17g")


def _floats(text):
    return tuple(float(tok) for tok in str(text).split(",") if tok.strip())


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    subcommand: str = "identify"
    problem: str = "f1"
    eps: tuple = (0.0, 1e-2, 1e-1)
    trials: int = 8
    M: float = 1e8
    beta: float = 0.7071
    sigma: float = 0.7
    nu: float = 100.0
    theta: float = 5.0
    gap_tol: float = 1e-8
    tol_act: float = 1e-8
    seed: int = 0
    out: str = "."
    png: bool = False
    half_width: float = 0.4
    resolution: int = 81
    window: float = None
    mu: float = 1e2
    max_iter: int = 20000
    grad_tol: float = 1e-6
    x: tuple = None
    start: tuple = None
    quick: bool = False
    workers: int = None
    lp_params: LpLpecParams = field(default=None, repr=False)
    qp_params: QpParams = field(default=None, repr=False)


_CONVERTERS = {
    "problem": str, "eps": _floats, "trials": int, "M": float, "beta": float, "sigma": float,
    "nu": float, "theta": float, "gap_tol": float, "tol_act": float, "seed": int, "out": str,
    "png": _bool, "half_width": float, "resolution": int, "window": float, "mu": float,
    "max_iter": int, "grad_tol": float, "x": _floats, "start": _floats, "quick": _bool,
    "workers": int,
}

_HELP = {
    "problem": "built-in problem (f1 or f2)",
    "eps": "noise level; repeat or comma-separate for several",
    "trials": "noisy trials per point (heatmap) or iterate (trajectory)",
    "M": "multiplier bound in the LP subproblem",
    "beta": "LP threshold scale",
    "sigma": "LP threshold exponent, in (0, 1)",
    "nu": "QP penalty weight",
    "theta": "QP proximal weight",
    "gap_tol": "QP duality-gap target",
    "tol_act": "QP activity band",
    "seed": "master seed",
    "out": "output directory",
    "png": "also render heatmap images",
    "half_width": "grid half-width per axis",
    "resolution": "grid points per axis",
    "window": "only evaluate grid points within this inf-norm radius",
    "mu": "quadratic penalty parameter",
    "max_iter": "descent iteration cap",
    "grad_tol": "descent gradient-norm stop",
    "x": "point for identify, comma separated (default: x_star)",
    "start": "trajectory start point, comma separated",
    "quick": "reduced instance counts for verify",
    "workers": "worker processes for heatmap",
}


def _key(name):
    return name.strip().replace("-", "_")


def read_config_file(path):
    """Parse a flat ``key = value`` file into a dict of converted values."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        name, value = (s.strip() for s in line.split("=", 1))
        key = _key(name)
        if key not in _CONVERTERS:
            raise UsageError(f"{path}:{lineno}: unknown key {name!r}")
        values[key] = _convert(key, value)
    return values


def _convert(key, value):
    try:
        return _CONVERTERS[key](value)
    except (TypeError, ValueError):
        raise UsageError(f"malformed value for {key}: {value!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="activeset-id", description="Active-set identification experiments.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", metavar="FILE", help="flat key = value config file")
    for key in _CONVERTERS:
        flag = "--" + key.replace("_", "-")
        if _CONVERTERS[key] is _bool:
            parser.add_argument(flag, dest=key, action="store_const", const=True,
                                default=argparse.SUPPRESS, help=_HELP[key])
        elif key == "eps":
            parser.add_argument(flag, dest=key, action="append", default=argparse.SUPPRESS,
                                metavar="E", help=_HELP[key])
        else:
            parser.add_argument(flag, dest=key, default=argparse.SUPPRESS, help=_HELP[key])
    return parser


def parse_config(args, file=None):
    """Resolve defaults, optional config file and flags into a validated :class:`RunConfig`."""
    ns = vars(build_parser().parse_args(list(args)))
    sub = ns.pop("subcommand")
    path = ns.pop("config", None) or file
    values = read_config_file(path) if path else {}
    for key, raw in ns.items():
        if key == "eps":
            values[key] = tuple(v for item in raw for v in _convert(key, item))
        elif _CONVERTERS[key] is _bool:
            values[key] = bool(raw)
        else:
            values[key] = _convert(key, raw)
    cfg = RunConfig(subcommand=sub, **values)
    return validate_config(cfg)


def validate_config(cfg):
    if cfg.problem not in PROBLEM_NAMES:
        raise UsageError(f"problem must be one of {', '.join(PROBLEM_NAMES)}, got {cfg.problem!r}")
    if not 0.0 < cfg.sigma < 1.0:
        raise UsageError(f"sigma out of range: {cfg.sigma!r} is not in (0, 1)")
    for key in ("M", "beta", "nu", "theta", "gap_tol", "half_width", "mu", "grad_tol"):
        if not getattr(cfg, key) > 0:
            raise UsageError(f"{key} must be positive, got {getattr(cfg, key)!r}")
    if cfg.tol_act < 0 or any(e < 0 for e in cfg.eps):
        raise UsageError("tol_act and eps must be nonnegative")
    if not cfg.eps:
        raise UsageError("at least one eps is required")
    if cfg.trials < 1 or cfg.resolution < 2 or cfg.max_iter < 0:
        raise UsageError("trials >= 1, resolution >= 2 and max_iter >= 0 are required")
    if cfg.window is not None and not cfg.window > 0:
        raise UsageError("window must be positive")
    cfg.lp_params = LpLpecParams(M=cfg.M, beta=cfg.beta, sigma=cfg.sigma)
    cfg.qp_params = QpParams(theta=cfg.theta, nu=cfg.nu, gap_tol=cfg.gap_tol, tol_act=cfg.tol_act)
    return cfg


# ---------------------------------------------------------------------------
# CSV output


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def heatmap_csv_text(cells):
    if not cells:
        raise ValueError("no cells to write")
    rows = []
    for cell in cells:
        for m in sorted(cell.success):
            rows.append((m, cell.eps, cell.point[0], cell.point[1], cell.success[m]))
    rows.sort()
    buf = io.StringIO()
    buf.write(",".join(HEATMAP_COLUMNS) + "\n")
    for m, eps, x1, x2, frac in rows:
        buf.write(f"{_fmt(x1)},{_fmt(x2)},{m},{_fmt(eps)},{_fmt(frac)}\n")
    return buf.getvalue()


def emit_heatmap_csv(cells, path):
    """Write grid cells as ``x1,x2,method,eps,success_fraction`` rows."""
    _write_text(path, heatmap_csv_text(cells))


def trajectory_csv_text(runs):
    """``runs`` maps eps to a list of TraceRecord."""
    n = len(next(iter(runs.values()))[0].x)
    head = ["eps", "iteration", "method", "correct", "spurious", "exact_match", "grad_norm",
            "objective"] + [f"x{i + 1}" for i in range(n)]
    buf = io.StringIO()
    buf.write(",".join(head) + "\n")
    for eps in sorted(runs):
        for rec in runs[eps]:
            for m in METHODS:
                vals = [_fmt(eps), str(rec.iteration), m, _fmt(rec.correct[m]), _fmt(rec.spurious[m]),
                        _fmt(rec.exact_match[m]), _fmt(rec.grad_norm), _fmt(rec.objective)]
                buf.write(",".join(vals + [_fmt(v) for v in rec.x]) + "\n")
    return buf.getvalue()


def read_heatmap_csv(path):
    """Parse a heatmap CSV into ``{(method, eps): [(x1, x2, fraction), ...]}``."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvFormatError(f"{path}: empty file")
        missing = [c for c in HEATMAP_COLUMNS if c not in header]
        if missing:
            raise CsvFormatError(f"{path}: missing column {missing[0]!r}")
        col = {name: header.index(name) for name in HEATMAP_COLUMNS}
        groups = {}
        for rowno, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise CsvFormatError(f"{path}: row {rowno}: expected {len(header)} fields, got {len(row)}")
            try:
                x1, x2 = float(row[col["x1"]]), float(row[col["x2"]])
                eps, frac = float(row[col["eps"]]), float(row[col["success_fraction"]])
            except ValueError:
                raise CsvFormatError(f"{path}: row {rowno}: non-numeric value") from None
            if not 0.0 <= frac <= 1.0:
                raise CsvFormatError(f"{path}: row {rowno}: success_fraction {frac} outside [0, 1]")
            groups.setdefault((row[col["method"]], eps), []).append((x1, x2, frac))
    if not groups:
        raise CsvFormatError(f"{path}: no data rows")
    return groups


def heatmap_arrays(rows):
    """Lattice axes and image array (rows indexed by x2) from ``(x1, x2, fraction)`` triples."""
    xs = sorted({r[0] for r in rows})
    ys = sorted({r[1] for r in rows})
    img = np.full((len(ys), len(xs)), np.nan)
    ix = {v: i for i, v in enumerate(xs)}
    iy = {v: i for i, v in enumerate(ys)}
    for x1, x2, frac in rows:
        img[iy[x2], ix[x1]] = frac
    return np.array(xs), np.array(ys), img


def render_heatmap(csv_path, png_path, x_star=None):
    """Render one image per ``(method, eps)`` group of a heatmap CSV.

    ``png_path`` is a directory; files are named ``<stem>_<method>_eps<eps>.png``
    after the CSV stem.  Returns the list of written paths.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = read_heatmap_csv(csv_path)
    os.makedirs(png_path, exist_ok=True)
    stem = os.path.splitext(os.path.basename(csv_path))[0]
    written = []
    for (method, eps), rows in sorted(groups.items()):
        xs, ys, img = heatmap_arrays(rows)
        fig, ax = plt.subplots(figsize=(4, 4), dpi=100)
        dx = (xs[1] - xs[0]) / 2 if xs.size > 1 else 0.5
        dy = (ys[1] - ys[0]) / 2 if ys.size > 1 else 0.5
        im = ax.imshow(img, origin="lower", cmap="viridis", vmin=0.0, vmax=1.0,
                       extent=(xs[0] - dx, xs[-1] + dx, ys[0] - dy, ys[-1] + dy))
        if x_star is not None:
            ax.plot([x_star[0]], [x_star[1]], marker="x", color="red", markersize=8)
        ax.set_title(f"{method}  eps={_fmt(eps)}")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        fig.colorbar(im, ax=ax, fraction=0.046)
        out = os.path.join(png_path, f"{stem}_{method}_eps{_fmt(eps)}.png")
        fig.savefig(out, metadata={"Software": None})
        plt.close(fig)
        written.append(out)
    return written


# ---------------------------------------------------------------------------
# subcommands


def _ensure_out(cfg):
    try:
        os.makedirs(cfg.out, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"output directory {cfg.out} is not writable: {exc}") from None
    if not os.access(cfg.out, os.W_OK):
        raise UsageError(f"output directory {cfg.out} is not writable")


def grid_config(cfg):
    return GridConfig(problem=cfg.problem, half_width=cfg.half_width, resolution=cfg.resolution,
                      noise_levels=tuple(cfg.eps), trials=cfg.trials, lp_params=cfg.lp_params,
                      qp_params=cfg.qp_params, seed=cfg.seed, window=cfg.window, workers=cfg.workers)


def cmd_heatmap(cfg, stream=sys.stdout):
    _ensure_out(cfg)
    cells = run_grid(grid_config(cfg))
    path = os.path.join(cfg.out, f"heatmap_{cfg.problem}.csv")
    emit_heatmap_csv(cells, path)
    print(f"wrote {path} ({len(cells)} cells)", file=stream)
    if cfg.png:
        for out in render_heatmap(path, cfg.out, x_star=resolve_problem(cfg.problem).x_star):
            print(f"wrote {out}", file=stream)
    return EXIT_OK


def cmd_trajectory(cfg, stream=sys.stdout):
    _ensure_out(cfg)
    runs = {}
    for eps in cfg.eps:
        tcfg = TrajectoryConfig(problem=cfg.problem, mu=cfg.mu, grad_tol=cfg.grad_tol,
                                max_iter=cfg.max_iter, noise_level=eps, trials=cfg.trials,
                                lp_params=cfg.lp_params, qp_params=cfg.qp_params, seed=cfg.seed,
                                start=None if cfg.start is None else np.array(cfg.start))
        runs[eps] = run_trajectory(tcfg)
    path = os.path.join(cfg.out, f"trajectory_{cfg.problem}.csv")
    _write_text(path, trajectory_csv_text(runs))
    for eps in sorted(runs):
        last = runs[eps][-1]
        print(f"eps={_fmt(eps)} iterations={last.iteration} grad_norm={last.grad_norm:.3e}", file=stream)
    print(f"wrote {path}", file=stream)
    return EXIT_OK


def cmd_identify(cfg, x=None, problem=None):
    """Identify at one point; returns ``(report text, exit code)``.

    ``problem`` overrides ``cfg.problem`` with any TestProblem or oracle.
    """
    prob = resolve_problem(problem if problem is not None else cfg.problem)
    if x is None:
        x = cfg.x if cfg.x is not None else prob.x_star
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != prob.oracle.n:
        raise UsageError(f"x has {x.shape[0]} entries, problem needs {prob.oracle.n}")
    eps = cfg.eps[0]
    ev = evaluate_noisy(prob.oracle, x, NoiseSpec(eps, derive_seed(cfg.seed, 0, 0)))
    lines = [f"problem={prob.name}", "x=" + ",".join(_fmt(v) for v in x), f"eps={_fmt(eps)}"]
    code = EXIT_OK
    try:
        lp = identify_lp(ev, cfg.lp_params)
    except IdentificationError as exc:
        lines.append(f"A_LP=error status={exc.status}")
        code = EXIT_FAILURE
        lp = None
    qp = identify_qp(ev, cfg.qp_params)
    if lp is not None:
        lines.append(f"A_LP={lp.active_estimate}")
    lines.append(f"A_QP={qp.active_estimate}")
    if lp is not None:
        lines += [f"rho_tilde={_fmt(lp.rho_tilde)}", f"rho_bar_tilde={_fmt(lp.rho_bar_tilde)}",
                  f"lp_threshold={_fmt(lp.threshold)}", f"psi={_fmt(kkt.psi(ev, lp.multipliers))}"]
    qp_mult = kkt.MultiplierPair(y=qp.alpha, z=qp.beta)
    lines += [f"gap={_fmt(qp.gap)}", f"qp_converged={str(qp.converged).lower()}",
              f"tol_act={_fmt(cfg.tol_act)}", f"psi_qp={_fmt(kkt.psi(ev, qp_mult))}"]
    if not qp.converged:
        code = EXIT_FAILURE
    return "\n".join(lines) + "\n", code


def cmd_verify(cfg, stream=sys.stdout, overrides=None):
    results = verify.run_suite(seed=cfg.seed, quick=cfg.quick, overrides=overrides)
    for res in results:
        print(res.line(), file=stream)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed} passed, {failed} failed", file=stream)
    return EXIT_FAILURE if failed else EXIT_OK


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        if cfg.subcommand == "heatmap":
            return cmd_heatmap(cfg)
        if cfg.subcommand == "trajectory":
            return cmd_trajectory(cfg)
        if cfg.subcommand == "identify":
            text, code = cmd_identify(cfg)
            sys.stdout.write(text)
            return code
        return cmd_verify(cfg)
    except (UsageError, ConfigError) as exc:
        print(f"activeset-id: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IdentificationError, DivergenceError, ArithmeticError, CsvFormatError, OSError) as exc:
        print(f"activeset-id: failure: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
