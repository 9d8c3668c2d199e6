"""Command-line interface: curve and sweep data as CSV with a reproducible metadata header.

Every output starts with '# key=value' lines carrying the tool version, the
command and the fully resolved parameter set, followed by a CSV table whose
floats use 17 significant digits. Parameters resolve as built-in defaults,
then a key=value config file (--config), then explicit flags.

Exit codes: 0 success, 2 constraint violation, 3 numerical failure, 4 bad input.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import fit_from_simulation, intersection_xc, probe_limit, sweep_xc_distance
from .closed_form import (
    PROBABILITY_SLACK,
    DecayQuery,
    decay_exponent,
    trapping_prob_exp_losses,
    trapping_prob_uninsured,
)
from .errors import (
    ConstraintViolatedError,
    DivergenceError,
    DomainError,
    NonConvergedError,
    NonConvergenceWarning,
    TrappingError,
)
from .insured_solver import (
    REFINE_TOL,
    analytic_uninsured_constant,
    build_solution,
    evaluate_y,
    load_solution,
    save_solution,
    trapping_prob_insured,
)
from .model import (
    InsuranceParams,
    ModelParams,
    derive_rates,
    insured_bound,
    insured_bound_uniform,
    lambda_boundary,
)
from .simulator import SimConfig, estimate_curve

__all__ = ["RunConfig", "EXIT_OK", "EXIT_CONSTRAINT", "EXIT_NUMERICAL", "EXIT_INPUT", "main"]

EXIT_OK = 0
EXIT_CONSTRAINT = 2
EXIT_NUMERICAL = 3
EXIT_INPUT = 4

# Depth of the solution used by the limit probe when the requested one is shallower.
PROBE_DEPTH = 6

COMMANDS = ("uninsured", "compare-exp", "constraint", "insured", "simulate", "fit", "xc", "decay")

# name -> (type, default). Lists are comma-separated; an empty default means "not set".
PARAMS: dict[str, tuple[str, object]] = {
    "a": ("float", 0.1),
    "b": ("float", 1.4),
    "c": ("float", 0.4),
    "lambda": ("float", 1.0),
    "alpha": ("float", 1.0),
    "xstar": ("float", 1.0),
    "kappa": ("float", 0.3),
    "theta": ("float", 0.5),
    "seed": ("int", 0),
    "paths": ("int", 2000),
    "horizon": ("float", 500.0),
    "depth": ("int", 3),
    "nodes": ("int", 64),
    "workers": ("int", 1),
    "poverty_line": ("str", "variable"),
    "grid": ("str", ""),
    "x": ("floats", ""),
    "alphas": ("floats", ""),
    "lambdas": ("floats", ""),
    "kappas": ("floats", ""),
    "thetas": ("floats", ""),
    "mus": ("floats", "1,2"),
    "a_method": ("str", "limit"),
    "a_value": ("float", ""),
    "fit_points": ("int", 30),
    "curves": ("bool", False),
    "uninsured_sim": ("bool", False),
    "cache_dir": ("str", ""),
}


@dataclass(frozen=True)
class RunConfig:
    """Parsed command with its fully resolved parameters."""

    command: str
    params: dict
    out: str | None

    def get(self, name: str):
        return self.params[name]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def _convert(name: str, raw) -> object:
    kind, _ = PARAMS[name]
    if raw == "" or raw is None:
        return None
    try:
        if kind == "float":
            return float(raw)
        if kind == "int":
            return int(raw)
        if kind == "bool":
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "floats":
            if isinstance(raw, tuple):
                return raw
            return tuple(float(v) for v in str(raw).split(",") if v.strip())
        return str(raw)
    except ValueError as exc:
        raise DomainError(f"cannot parse {name}={raw!r} as {kind}") from exc


def read_config(path: str) -> dict:
    """Parse a key=value file; blank lines and lines starting with '#' are skipped."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DomainError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DomainError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in PARAMS:
            raise DomainError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_INPUT)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="trapprob",
        description="Trapping probabilities under proportional losses.",
        allow_abbrev=False,
    )
    parser.add_argument("--version", action="version", version=f"trapprob {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "uninsured": "closed-form uninsured curves over alpha/lambda sweeps",
        "compare-exp": "proportional versus exponential random-valued losses",
        "constraint": "insured net-profit boundary lambda_max(kappa) over theta or alpha",
        "insured": "piecewise insured curves (solution cached with --cache-dir)",
        "simulate": "Monte-Carlo trapping estimates",
        "fit": "fit A to simulations on the first subinterval and probe the limit",
        "xc": "uninsured/insured intersection sweep, or the two curves with --curves",
        "decay": "tail exponent from the decay equation",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name], allow_abbrev=False)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="PATH")
        for key, (kind, _) in PARAMS.items():
            flag = "--" + key.replace("_", "-")
            if kind == "bool":
                p.add_argument(flag, dest=key, action="store_const", const=True, default=None)
            else:
                p.add_argument(flag, dest=key, default=None)
        # Short alias for the fitted or supplied constant.
        p.add_argument("--A", dest="a_value", default=None, help="alias of --a-value")
    return parser


def resolve(argv: list[str] | None = None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    merged = {k: _convert(k, d) for k, (_, d) in PARAMS.items()}
    if ns.config:
        for k, v in read_config(ns.config).items():
            merged[k] = _convert(k, v)
    for k in PARAMS:
        raw = getattr(ns, k)
        if raw is not None:
            merged[k] = _convert(k, raw)
    return RunConfig(command=ns.command, params=merged, out=ns.out)


# Parameter helpers -------------------------------------------------------


def _model(cfg: RunConfig, lam: float | None = None, alpha: float | None = None) -> ModelParams:
    p = cfg.params
    return ModelParams(
        a=p["a"],
        b=p["b"],
        c_invest=p["c"],
        lam=p["lambda"] if lam is None else lam,
        alpha=p["alpha"] if alpha is None else alpha,
        x_star_base=p["xstar"],
    )


def _sim_config(cfg: RunConfig) -> SimConfig:
    p = cfg.params
    return SimConfig(
        n_paths=p["paths"], horizon=p["horizon"], seed=p["seed"], workers=p["workers"]
    )


def _list_or(cfg: RunConfig, list_key: str, scalar_key: str) -> tuple[float, ...]:
    vals = cfg.get(list_key)
    return vals if vals else (cfg.get(scalar_key),)


def _grid(cfg: RunConfig, lo: float, hi: float, n: int = 200) -> np.ndarray:
    """Explicit --x list, else --grid LO:HI:N, else n points on [lo, hi]."""
    if cfg.get("x"):
        return np.asarray(cfg.get("x"), dtype=float)
    spec = cfg.get("grid")
    if spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise DomainError(f"--grid expects LO:HI:N, got {spec!r}")
        try:
            lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise DomainError(f"--grid expects LO:HI:N, got {spec!r}") from exc
    if n < 1 or not hi >= lo:
        raise DomainError(f"bad grid [{lo}, {hi}] with {n} points")
    return np.linspace(lo, hi, n)


def _cache_key(m: ModelParams, ins: InsuranceParams, depth: int, nodes: int, line: str) -> str:
    doc = dict(
        version=__version__,
        a=m.a,
        b=m.b,
        c=m.c_invest,
        lam=m.lam,
        alpha=m.alpha,
        xstar=m.x_star_base,
        kappa=ins.kappa,
        theta=ins.theta,
        depth=depth,
        nodes=nodes,
        line=line,
    )
    blob = json.dumps({k: _fmt(v) for k, v in doc.items()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:24]


def _solution(cfg: RunConfig, m: ModelParams, ins: InsuranceParams):
    depth, nodes, line = cfg.get("depth"), cfg.get("nodes"), cfg.get("poverty_line")
    cache_dir = cfg.get("cache_dir")
    if not cache_dir:
        return build_solution(m, ins, depth=depth, nodes=nodes, poverty_line=line)
    path = Path(cache_dir) / f"solution-{_cache_key(m, ins, depth, nodes, line)}.json"
    if path.exists():
        return load_solution(path)
    sol = build_solution(m, ins, depth=depth, nodes=nodes, poverty_line=line)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_solution(sol, path)
    return sol


def _choose_a(cfg: RunConfig, sol) -> tuple[float, str]:
    if cfg.get("a_value") is not None:
        return float(cfg.get("a_value")), "value"
    method = cfg.get("a_method")
    if method == "limit":
        probe_sol = sol
        if sol.depth < PROBE_DEPTH and sol.model is not None:
            probe_sol = build_solution(
                sol.model, sol.insurance, depth=PROBE_DEPTH, nodes=32, poverty_line=sol.poverty_line
            )
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonConvergenceWarning)
            return probe_limit(probe_sol).implied_a, "limit"
    if method == "fit":
        return fit_from_simulation(sol, _sim_config(cfg), cfg.get("fit_points"))[0].a_hat, "fit"
    if method == "analytic":
        return analytic_uninsured_constant(sol.rho), "analytic"
    raise DomainError(f"a_method must be limit, fit or analytic, got {method!r}")


# Commands ------------------------------------------------------------------


def cmd_uninsured(cfg: RunConfig):
    xs = cfg.get("xstar")
    grid = _grid(cfg, xs, 10.0 * xs)
    rows = []
    for alpha in _list_or(cfg, "alphas", "alpha"):
        for lam in _list_or(cfg, "lambdas", "lambda"):
            m = _model(cfg, lam=lam, alpha=alpha)
            f = trapping_prob_uninsured(grid, m)
            rows += [(alpha, lam, m.r, x, fx) for x, fx in zip(grid, f)]
    return ["alpha", "lambda", "r", "x", "f"], rows


def cmd_compare_exp(cfg: RunConfig):
    m = _model(cfg)
    grid = _grid(cfg, m.x_star_base, 10.0 * m.x_star_base)
    f_prop = trapping_prob_uninsured(grid, m)
    rows = []
    for mu in cfg.get("mus"):
        f_exp = trapping_prob_exp_losses(grid, mu, m.lam, m.r, m.x_star_base)
        for x, fp, fe in zip(grid, f_prop, f_exp):
            log_p = math.log(fp) if fp > 0.0 else -math.inf
            log_e = math.log(fe) if fe > 0.0 else -math.inf
            ratio = fe / fp if fp > 0.0 else math.nan
            rows.append((mu, x, fp, fe, log_p, log_e, ratio))
    return ["mu", "x", "f_proportional", "f_exponential", "log_f_proportional", "log_f_exponential", "ratio"], rows


def cmd_constraint(cfg: RunConfig):
    kappas = cfg.get("kappas") or tuple(np.round(np.linspace(0.01, 0.99, 99), 12))
    rows = []
    for alpha in _list_or(cfg, "alphas", "alpha"):
        m = _model(cfg, alpha=alpha)
        for theta in _list_or(cfg, "thetas", "theta"):
            for kappa in kappas:
                ins = InsuranceParams(kappa, theta)
                lam_max = lambda_boundary(m, ins)
                rates = derive_rates(m.with_(lam=lam_max), ins)
                bound = insured_bound_uniform(kappa) if alpha == 1.0 else insured_bound(alpha, kappa)
                rows.append((alpha, theta, kappa, bound, lam_max, lam_max / rates.r_eff))
    return ["alpha", "theta", "kappa", "bound", "lambda_max", "lambda_over_r_eff"], rows


def cmd_insured(cfg: RunConfig):
    rows = []
    meta = []
    for kappa in _list_or(cfg, "kappas", "kappa"):
        for lam in _list_or(cfg, "lambdas", "lambda"):
            m = _model(cfg, lam=lam)
            ins = InsuranceParams(kappa, cfg.get("theta"))
            sol = _solution(cfg, m, ins)
            a_val, how = _choose_a(cfg, sol)
            xs = sol.x_star_eff
            grid = _grid(cfg, xs, xs + sol.x_tilde_max)
            grid = grid[(grid >= xs) & (grid <= xs + sol.x_tilde_max)]
            y = np.asarray(evaluate_y(sol, np.clip(grid - xs, 0.0, None)))
            f = np.atleast_1d(trapping_prob_insured(sol, a_val, grid))
            interval = [sol.grid.interval_of(float(t)) for t in np.clip(grid - xs, 0.0, None)]
            meta.append(f"A[kappa={_fmt(kappa)},lambda={_fmt(lam)}]={_fmt(a_val)} ({how})")
            rows += [
                (kappa, lam, xs, a_val, x, x - xs, j, yy, ff)
                for x, j, yy, ff in zip(grid, interval, y, f)
            ]
    cols = ["kappa", "lambda", "x_star_eff", "A", "x", "x_tilde", "interval", "y", "f"]
    return cols, rows, meta


def cmd_simulate(cfg: RunConfig):
    m = _model(cfg)
    sim = _sim_config(cfg)
    if cfg.get("uninsured_sim"):
        ins = None
        xs = m.x_star_base
    else:
        ins = InsuranceParams(cfg.get("kappa"), cfg.get("theta"))
        xs = derive_rates(m, ins, cfg.get("poverty_line")).x_star_eff
    grid = _grid(cfg, xs, 5.0 * xs, 20)
    est = estimate_curve(grid, m, ins, sim, poverty_line=cfg.get("poverty_line"))
    rows = [(e.x0, e.p_hat, e.std_err, e.n) for e in est]
    return ["x0", "p_hat", "std_err", "n_paths"], rows


def cmd_fit(cfg: RunConfig):
    m = _model(cfg)
    ins = InsuranceParams(cfg.get("kappa"), cfg.get("theta"))
    sol = _solution(cfg, m, ins)
    fit, est = fit_from_simulation(sol, _sim_config(cfg), cfg.get("fit_points"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        probe = probe_limit(sol)
    meta = [
        f"a_hat={_fmt(fit.a_hat)}",
        f"residual_norm={_fmt(fit.residual_norm)}",
        f"n_points={fit.n_points}",
        f"fit_range={_fmt(fit.fit_range[0])},{_fmt(fit.fit_range[1])}",
        f"limit_implied_a={_fmt(probe.implied_a)}",
    ]
    rows = [
        (e.x0, e.p_hat, e.std_err, float(trapping_prob_insured(sol, fit.a_hat, e.x0)), fit.a_hat)
        for e in est
    ]
    return ["x0", "p_hat", "std_err", "f_fitted", "a_hat"], rows, meta


def cmd_xc(cfg: RunConfig):
    kappas = _list_or(cfg, "kappas", "kappa")
    lambdas = _list_or(cfg, "lambdas", "lambda")
    thetas = _list_or(cfg, "thetas", "theta")
    line = cfg.get("poverty_line")
    if cfg.get("curves"):
        rows = []
        meta = []
        for kappa in kappas:
            for lam in lambdas:
                for theta in thetas:
                    m = _model(cfg, lam=lam)
                    ins = InsuranceParams(kappa, theta)
                    sol = _solution(cfg, m, ins)
                    a_val, how = _choose_a(cfg, sol)
                    lo = m.x_star_base
                    grid = _grid(cfg, lo, sol.x_star_eff + sol.x_tilde_max)
                    f_i = np.atleast_1d(trapping_prob_insured(sol, a_val, grid))
                    try:
                        f_u = np.atleast_1d(trapping_prob_uninsured(grid, m))
                    except ConstraintViolatedError:
                        f_u = np.ones_like(grid)
                    res = intersection_xc(m, ins, sol, a_val)
                    meta.append(
                        f"kappa={_fmt(kappa)},lambda={_fmt(lam)},theta={_fmt(theta)}: "
                        f"A={_fmt(a_val)} ({how}) x_c={_fmt(res.x_c)}"
                    )
                    rows += [
                        (kappa, lam, theta, sol.x_star_eff, x, fu, fi, fu - fi)
                        for x, fu, fi in zip(grid, f_u, f_i)
                    ]
        cols = ["kappa", "lambda", "theta", "x_star_eff", "x", "f_uninsured", "f_insured", "difference"]
        return cols, rows, meta
    rows = []
    sim = _sim_config(cfg) if cfg.get("a_method") == "fit" else None
    for theta in thetas:
        for row in sweep_xc_distance(
            kappas,
            lambdas,
            theta,
            _model(cfg),
            a_method=cfg.get("a_method"),
            depth=cfg.get("depth"),
            nodes=cfg.get("nodes"),
            sim_cfg=sim,
            poverty_line=line,
        ):
            rows.append((row.kappa, row.lam, row.theta, row.x_c, row.distance, row.status))
    return ["kappa", "lambda", "theta", "x_c", "distance", "status"], rows


def cmd_decay(cfg: RunConfig):
    rows = []
    for kappa in _list_or(cfg, "kappas", "kappa"):
        for lam in _list_or(cfg, "lambdas", "lambda"):
            m = _model(cfg, lam=lam)
            ins = InsuranceParams(kappa, cfg.get("theta"))
            r_eff = derive_rates(m, ins, cfg.get("poverty_line")).r_eff
            gamma = decay_exponent(DecayQuery(m.alpha, lam, r_eff, kappa))
            rows.append((m.alpha, lam, kappa, r_eff, gamma))
    return ["alpha", "lambda", "kappa", "r_eff", "gamma"], rows


HANDLERS = {
    "uninsured": cmd_uninsured,
    "compare-exp": cmd_compare_exp,
    "constraint": cmd_constraint,
    "insured": cmd_insured,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "xc": cmd_xc,
    "decay": cmd_decay,
}


def render(cfg: RunConfig, columns, rows, extra_meta=()) -> str:
    """Metadata header followed by the CSV table."""
    buf = io.StringIO()
    buf.write(f"# tool=trapprob\n# version={__version__}\n# command={cfg.command}\n")
    for key in sorted(cfg.params):
        buf.write(f"# {key}={_fmt(cfg.params[key])}\n")
    buf.write(f"# probability_slack={_fmt(PROBABILITY_SLACK)}\n# refine_tol={_fmt(REFINE_TOL)}\n")
    for line in extra_meta:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def run(cfg: RunConfig) -> str:
    result = HANDLERS[cfg.command](cfg)
    columns, rows = result[0], result[1]
    meta = result[2] if len(result) > 2 else ()
    return render(cfg, columns, rows, meta)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ConstraintViolatedError):
        return EXIT_CONSTRAINT
    if isinstance(exc, (NonConvergedError, DivergenceError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (DomainError, ValueError)):
        return EXIT_INPUT
    return EXIT_NUMERICAL


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = resolve(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except TrappingError as exc:
        sys.stderr.write(f"trapprob: {type(exc).__name__}: {exc}\n")
        return exit_code_for(exc)
    try:
        text = run(cfg)
    except (TrappingError, ValueError) as exc:
        sys.stderr.write(f"trapprob: {type(exc).__name__}: {exc}\n")
        return exit_code_for(exc)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
