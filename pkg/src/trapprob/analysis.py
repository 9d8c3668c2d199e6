"""Calibration of the insured constant A, the limit probe, and uninsured/insured comparisons."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .closed_form import trapping_prob_uninsured
from .errors import (
    ConstraintViolatedError,
    DegenerateFitError,
    InsufficientDataError,
    NonConvergenceWarning,
    TrappingError,
)
from .insured_solver import (
    PiecewiseSolution,
    build_solution,
    evaluate_y,
    fundamental_v,
    trapping_prob_insured,
)
from .model import InsuranceParams, ModelParams, net_profit_margin_insured
from .simulator import SimConfig, SimEstimate, estimate_curve

__all__ = [
    "FitResult",
    "LimitProbe",
    "IntersectionResult",
    "SweepRow",
    "fit_grid",
    "fit_A",
    "fit_from_simulation",
    "probe_limit",
    "aitken",
    "intersection_xc",
    "sweep_xc_distance",
]

DEFAULT_FIT_POINTS = 30
DEFAULT_FIT_PATHS = 2000
XC_TOL = 1e-8


@dataclass(frozen=True)
class FitResult:
    a_hat: float
    residual_norm: float
    n_points: int
    fit_range: tuple[float, float]


@dataclass(frozen=True)
class LimitProbe:
    """Endpoint values y(x~_1), ..., y(x~_{J+1}) with the extrapolated limit."""

    points: tuple[float, ...]
    values: tuple[float, ...]
    l_hat: float
    implied_a: float


@dataclass(frozen=True)
class IntersectionResult:
    x_c: float | None
    bracket: tuple[float, float] | None
    tolerance: float


@dataclass(frozen=True)
class SweepRow:
    kappa: float
    lam: float
    theta: float
    x_c: float | None
    distance: float | None
    status: str


def _first_interval(sol: PiecewiseSolution) -> tuple[float, float]:
    xs = sol.x_star_eff
    return xs, xs + sol.grid.limits[1]


def fit_grid(sol: PiecewiseSolution, n_points: int = DEFAULT_FIT_POINTS) -> np.ndarray:
    """Equally spaced capital levels covering the first subinterval."""
    lo, hi = _first_interval(sol)
    return np.linspace(lo, hi, n_points)


def fit_A(estimates: list[SimEstimate], sol: PiecewiseSolution) -> FitResult:
    """Weighted least-squares fit of f = 1 + A v(x - x*) to simulated estimates.

    Only estimates inside the first subinterval are used. Weights are
    1/std_err^2; points with zero standard error get the largest finite
    weight present (equal weights when every standard error is zero).
    """
    lo, hi = _first_interval(sol)
    slack = 1e-12 * max(1.0, hi)
    usable = [e for e in estimates if lo - slack <= e.x0 <= hi + slack]
    if len(usable) < 2:
        raise InsufficientDataError(
            f"need at least two estimates in [{lo:g}, {hi:g}], got {len(usable)}"
        )
    x = np.array([e.x0 for e in usable])
    p = np.array([e.p_hat for e in usable])
    se = np.array([e.std_err for e in usable])
    v = np.asarray(fundamental_v(np.clip(x - sol.x_star_eff, 0.0, None), sol.triple, sol.x_star_eff))
    if np.all(np.abs(v) < 1e-14):
        raise DegenerateFitError("v vanishes at every fit point")
    positive = se > 0.0
    if positive.any():
        w = np.empty_like(se)
        w[positive] = 1.0 / se[positive] ** 2
        w[~positive] = np.max(w[positive])
    else:
        w = np.ones_like(se)
    a_hat = float(np.sum(w * v * (p - 1.0)) / np.sum(w * v * v))
    resid = 1.0 + a_hat * v - p
    norm = math.sqrt(float(np.sum(w * resid * resid)) / len(usable))
    return FitResult(a_hat=a_hat, residual_norm=norm, n_points=len(usable), fit_range=(lo, hi))


def fit_from_simulation(
    sol: PiecewiseSolution,
    cfg: SimConfig,
    n_points: int = DEFAULT_FIT_POINTS,
) -> tuple[FitResult, list[SimEstimate]]:
    """Simulate on the first subinterval and fit A."""
    if sol.model is None or sol.insurance is None:
        raise InsufficientDataError("solution carries no model parameters to simulate")
    grid = fit_grid(sol, n_points)
    est = estimate_curve(grid, sol.model, sol.insurance, cfg, poverty_line=sol.poverty_line)
    return fit_A(est, sol), est


def aitken(seq) -> float:
    """Aitken delta-squared extrapolation from the last three terms."""
    s0, s1, s2 = (float(v) for v in seq[-3:])
    denom = (s2 - s1) - (s1 - s0)
    if denom == 0.0:
        return s2
    return s2 - (s2 - s1) ** 2 / denom


def probe_limit(sol: PiecewiseSolution, n_geometric: int = 12) -> LimitProbe:
    """Estimate lim y(x~) from interval-endpoint values.

    With kappa < 1 the sequence is y at x~_1..x~_{J+1}; with kappa = 1 it is
    v at x* 4^k, k = 0..n_geometric-1. The limit is the Aitken extrapolation
    of the last three values; the implied constant is A = -1/L.
    """
    if sol.kappa == 1.0:
        pts = sol.x_star_eff * 4.0 ** np.arange(n_geometric)
        vals = np.asarray(fundamental_v(pts, sol.triple, sol.x_star_eff))
    else:
        pts = np.asarray(sol.grid.limits[1:])
        vals = np.asarray(evaluate_y(sol, pts))
    vals_t = tuple(float(v) for v in vals)
    if len(vals_t) < 3:
        warnings.warn(
            f"only {len(vals_t)} endpoint value(s); build with depth >= 2 for a limit estimate",
            NonConvergenceWarning,
            stacklevel=2,
        )
        l_hat = vals_t[-1]
    else:
        d = np.diff(vals)
        if not (abs(d[-1]) < abs(d[-2])):
            warnings.warn(
                "endpoint values are not contracting; the extrapolated limit is unreliable",
                NonConvergenceWarning,
                stacklevel=2,
            )
        l_hat = aitken(vals_t)
    implied = -1.0 / l_hat if l_hat != 0.0 else math.inf
    return LimitProbe(tuple(float(p) for p in pts), vals_t, l_hat, implied)


def _uninsured_or_certain(x: float, m: ModelParams) -> float:
    try:
        return float(trapping_prob_uninsured(x, m))
    except ConstraintViolatedError:
        return 1.0


def intersection_xc(
    m: ModelParams,
    ins: InsuranceParams,
    sol: PiecewiseSolution,
    A: float,
    search_range: tuple[float, float] | None = None,
    n_scan: int = 400,
    tol: float = XC_TOL,
) -> IntersectionResult:
    """First crossing where the insured curve drops below the uninsured one.

    d(x) = f_uninsured(x) - f_insured(x) is scanned on ``n_scan`` equally
    spaced points over the range, ``n_scan`` more over the part inside the
    first subinterval and ``n_scan`` geometrically spaced points just above
    the insured critical capital, where crossings sit. Leading points
    with |d| < 1e-12 are skipped and the first sign change is refined by
    bisection to ``tol``. The uninsured curve uses the base critical capital;
    the insured curve uses the solution's own (variable or fixed) critical
    capital.
    """
    if search_range is None:
        search_range = (m.x_star_base, sol.x_star_eff + sol.x_tilde_max)
    lo, hi = (float(v) for v in search_range)

    def d(x: float) -> float:
        return _uninsured_or_certain(x, m) - float(trapping_prob_insured(sol, A, x))

    first_hi = min(hi, sol.x_star_eff + sol.grid.limits[1])
    xs = np.linspace(lo, hi, n_scan)
    if first_hi > lo:
        xs = np.union1d(xs, np.linspace(lo, first_hi, n_scan))
        # Crossings can sit very close to the insured critical capital; the
        # geometric points stop at the bisection tolerance, below which a
        # crossing cannot be told apart from the critical capital itself.
        floor = math.log10(max(tol / sol.grid.limits[1], 1e-15))
        near = sol.x_star_eff + sol.grid.limits[1] * np.logspace(floor, 0.0, n_scan)
        xs = np.union1d(xs, near[(near > lo) & (near < hi)])
    vals = [d(float(x)) for x in xs]
    start = next((i for i, v in enumerate(vals) if abs(v) >= 1e-12), None)
    if start is None:
        return IntersectionResult(None, None, tol)
    negative = vals[start] < 0.0
    for i in range(start + 1, len(vals)):
        if vals[i] != 0.0 and (vals[i] < 0.0) == negative:
            continue
        left, right = float(xs[i - 1]), float(xs[i])
        while right - left > tol:
            mid = 0.5 * (left + right)
            f_mid = d(mid)
            if f_mid != 0.0 and (f_mid < 0.0) == negative:
                left = mid
            else:
                right = mid
        return IntersectionResult(0.5 * (left + right), (left, right), tol)
    return IntersectionResult(None, None, tol)


def sweep_xc_distance(
    kappa_grid,
    lambda_grid,
    theta: float,
    m: ModelParams,
    a_method: str = "limit",
    depth: int = 6,
    nodes: int = 32,
    sim_cfg: SimConfig | None = None,
    poverty_line: str = "variable",
) -> list[SweepRow]:
    """Distance x_c - x* over a (kappa, lambda) grid, in grid order.

    Cells where the uninsured process is certainly trapped (lambda/r >= 1) or
    where the insured net-profit condition fails are marked skipped. A is
    taken from the limit probe (``a_method="limit"``) or fitted to simulated
    data on the first subinterval (``"fit"``, needs ``sim_cfg``).
    """
    if a_method not in ("limit", "fit"):
        raise ValueError(f"a_method must be 'limit' or 'fit', got {a_method!r}")
    if a_method == "fit" and sim_cfg is None:
        raise ValueError("a_method='fit' needs a simulation config")
    rows = []
    for kappa in kappa_grid:
        for lam in lambda_grid:
            kappa, lam = float(kappa), float(lam)
            cell = m.with_(lam=lam)
            ins = InsuranceParams(kappa, theta)
            if cell.lam / cell.r >= 1.0:
                rows.append(SweepRow(kappa, lam, theta, None, None, "skipped:uninsured-certain"))
                continue
            try:
                if net_profit_margin_insured(cell, ins, poverty_line) <= 0.0:
                    rows.append(SweepRow(kappa, lam, theta, None, None, "skipped:insured-constraint"))
                    continue
                sol = build_solution(cell, ins, depth=depth, nodes=nodes, poverty_line=poverty_line)
                if a_method == "limit":
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore", NonConvergenceWarning)
                        a_val = probe_limit(sol).implied_a
                else:
                    a_val = fit_from_simulation(sol, sim_cfg)[0].a_hat
                res = intersection_xc(cell, ins, sol, a_val)
            except TrappingError as exc:
                rows.append(SweepRow(kappa, lam, theta, None, None, f"error:{type(exc).__name__}"))
                continue
            if res.x_c is None:
                rows.append(SweepRow(kappa, lam, theta, None, None, "none"))
            else:
                rows.append(
                    SweepRow(kappa, lam, theta, res.x_c, res.x_c - cell.x_star_base, "ok")
                )
    return rows
