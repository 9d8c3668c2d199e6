"""Piecewise solution of the insured trapping problem for uniform remaining proportions.

With surplus capital x~ = x - x*, h(x~) = f(x~ + x*) satisfies on x~ > 0

    L[h](x~) = c h(l(x~)),   L[y] = r^ y'' + p y' + c y,

where r^(x~) = x~ (x~ + x*), p(x~) = (2 - lambda/r) x~ + x* (1 - lambda/r),
c = lambda (1 - kappa) / (r kappa), l(x~) = (1 - kappa) x~ - kappa x* and h = 1
for negative arguments. Writing h = 1 + A y, y = v on the first subinterval
and each later piece adds an increment

    Delta_{j+1}(x~) = c int_{x~_{j+1}}^{x~} G(x~, s) Delta_j(l(s)) ds,  Delta_0 = v,

with G the Green's function of L. The integral splits as
c [v(x~) P(x~) - u(x~) Q(x~)] with P, Q cumulative integrals of
u phi / (r^ W) and v phi / (r^ W); these are accumulated with spectral
(Chebyshev-Lobatto) integration on each subinterval.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from numpy.polynomial import chebyshev as cheb
from scipy import fft, integrate

from .closed_form import as_probability
from .errors import (
    ConstraintViolatedError,
    DegenerateWronskianError,
    DomainError,
    NonConvergedError,
    OutOfBuiltRangeError,
    QuadratureError,
)
from .model import (
    InsuranceParams,
    ModelParams,
    derive_rates,
    net_profit_margin_insured,
)
from .special_functions import gauss_2f1

__all__ = [
    "HypergeomTriple",
    "SubintervalGrid",
    "IntervalTable",
    "PiecewiseSolution",
    "hypergeom_params",
    "subinterval_limits",
    "fundamental_u",
    "fundamental_v",
    "fundamental_u_pfaff",
    "fundamental_v_pfaff",
    "wronskian",
    "scaled_wronskian",
    "greens_function",
    "build_solution",
    "evaluate_y",
    "evaluate_partial",
    "evaluate_increment",
    "trapping_prob_insured",
    "insured_generator_residual",
    "analytic_uninsured_constant",
    "save_solution",
    "load_solution",
    "CACHE_FORMAT_VERSION",
]

CACHE_FORMAT_VERSION = 1
# Exponent of the node map x = lo + L ((1 + t)/2)^g used where an increment starts.
GRADING = 4
# Relative agreement required between two successive node resolutions.
REFINE_TOL = 1e-7
MAX_DOUBLINGS = 3
# Increments smaller than this (relative to max |v|) are dropped.
TRUNCATE_REL = 1e-14
# Imaginary parts of u, v larger than this (relative) signal a broken evaluation.
REALNESS_TOL = 1e-8


@dataclass(frozen=True)
class HypergeomTriple:
    """Parameters a1, b1, c1 of the hypergeometric solutions of L[y] = 0."""

    a1: complex
    b1: complex
    c1: float

    @property
    def rho(self) -> float:
        """lambda / r recovered from c1 = 1 - lambda/r."""
        return 1.0 - self.c1


def hypergeom_params(lam: float, r: float, kappa: float) -> HypergeomTriple:
    """a1 = (1 - rho)/2 + sqrt((1 + rho)^2 - 4 rho / kappa)/2, b1 = c1 - a1, c1 = 1 - rho."""
    if not (lam > 0.0 and r > 0.0):
        raise DomainError("lambda and r must be positive")
    if not (0.0 < kappa <= 1.0):
        raise DomainError(f"kappa must lie in (0, 1], got {kappa}")
    rho = lam / r
    disc = (1.0 + rho) ** 2 - 4.0 * rho / kappa
    root = cmath.sqrt(complex(disc, 0.0))
    half = 0.5 * (1.0 - rho)
    a1 = complex(half, 0.0) + 0.5 * root
    b1 = complex(half, 0.0) - 0.5 * root
    return HypergeomTriple(a1=a1, b1=b1, c1=1.0 - rho)


def subinterval_limits(x_star: float, kappa: float, depth: int) -> tuple[float, ...]:
    """Limits x~_0 = 0 < x~_1 < ... < x~_{depth+1} from x~_{j+1} = (x~_j + x* kappa)/(1 - kappa)."""
    if kappa >= 1.0:
        raise DomainError("subintervals are unbounded when kappa = 1")
    limits = [0.0]
    for _ in range(depth + 1):
        limits.append((limits[-1] + x_star * kappa) / (1.0 - kappa))
    return tuple(limits)


@dataclass(frozen=True)
class SubintervalGrid:
    limits: tuple[float, ...]
    kappa: float
    x_star_eff: float

    def closed_form(self, j: int) -> float:
        """x* ((1 - kappa)^-j - 1)."""
        return self.x_star_eff * math.expm1(-j * math.log1p(-self.kappa))

    def interval_of(self, x_tilde: float) -> int:
        """Index k with x~ in I_k = (x~_k, x~_{k+1}]; I_0 includes 0."""
        lim = self.limits
        if x_tilde <= lim[1]:
            return 0
        k = int(np.searchsorted(lim, x_tilde, side="left")) - 1
        return min(k, len(lim) - 2)


# Fundamental solutions ----------------------------------------------------


def _as_array(x):
    return np.atleast_1d(np.asarray(x, dtype=float))


def _real(values: np.ndarray, what: str) -> np.ndarray:
    scale = np.maximum(np.abs(values.real), 1e-300)
    bad = np.abs(values.imag) > REALNESS_TOL * scale
    bad &= np.abs(values.imag) > 1e-200
    if bad.any():
        worst = float(np.max(np.abs(values.imag)[bad] / scale[bad]))
        raise NonConvergedError(f"{what} has imaginary residue {worst:.3g}")
    return values.real


def _u_complex(x_tilde, p: HypergeomTriple, x_star: float) -> np.ndarray:
    xt = _as_array(x_tilde)
    z = xt / (xt + x_star)
    pref = np.exp(-p.a1 * np.log1p(xt / x_star))
    return pref * gauss_2f1(p.a1, p.a1, p.c1, z)


def _v_complex(x_tilde, p: HypergeomTriple, x_star: float) -> np.ndarray:
    xt = _as_array(x_tilde)
    rho = p.rho
    z = xt / (xt + x_star)
    pref = np.exp(-p.a1 * np.log1p(xt / x_star))
    hyp = gauss_2f1(rho + p.a1, rho + p.a1, 1.0 + rho, z)
    return z**rho * pref * hyp


def _scalar_out(x, values):
    return float(values[0]) if np.ndim(x) == 0 else values


def fundamental_u(x_tilde, p: HypergeomTriple, x_star_eff: float):
    """u(x~) = (1 + x~/x*)^-a1 2F1(a1, a1; c1; x~/(x~ + x*)), the solution with u(0) = 1."""
    if np.any(_as_array(x_tilde) < 0.0):
        raise DomainError("u is defined for non-negative surplus")
    return _scalar_out(x_tilde, _real(_u_complex(x_tilde, p, x_star_eff), "u"))


def fundamental_v(x_tilde, p: HypergeomTriple, x_star_eff: float):
    """v(x~) = z^rho (1 + x~/x*)^-a1 2F1(rho + a1, rho + a1; 1 + rho; z), z = x~/(x~ + x*)."""
    if np.any(_as_array(x_tilde) < 0.0):
        raise DomainError("v is defined for non-negative surplus")
    return _scalar_out(x_tilde, _real(_v_complex(x_tilde, p, x_star_eff), "v"))


def fundamental_u_pfaff(x_tilde, p: HypergeomTriple, x_star_eff: float):
    """u through the untransformed series 2F1(a1, b1; c1; -x~/x*)."""
    xt = _as_array(x_tilde)
    return _scalar_out(x_tilde, gauss_2f1(p.a1, p.b1, p.c1, -xt / x_star_eff).real)


def fundamental_v_pfaff(x_tilde, p: HypergeomTriple, x_star_eff: float):
    """v through (x~/x*)^rho 2F1(rho + a1, rho + b1; 1 + rho; -x~/x*)."""
    xt = _as_array(x_tilde)
    rho = p.rho
    w = xt / x_star_eff
    hyp = gauss_2f1(rho + p.a1, rho + p.b1, 1.0 + rho, -w)
    return _scalar_out(x_tilde, w**rho * hyp.real)


def _derivatives_direct(xt: np.ndarray, p: HypergeomTriple, xs: float):
    """u, u', v, v' from the x~/(x~ + x*) representation, differentiating term-wise."""
    rho, a1 = p.rho, p.a1
    z = xt / (xt + xs)
    one_m = 1.0 - z
    dz = one_m**2 / xs
    pw = np.exp(a1 * np.log(one_m))  # (1 - z)^a1
    fu = gauss_2f1(a1, a1, p.c1, z)
    dfu = a1 * a1 / p.c1 * gauss_2f1(a1 + 1.0, a1 + 1.0, p.c1 + 1.0, z)
    u = pw * fu
    du = (-a1 * pw / one_m * fu + pw * dfu) * dz
    e = rho + a1
    fv = gauss_2f1(e, e, 1.0 + rho, z)
    dfv = e * e / (1.0 + rho) * gauss_2f1(e + 1.0, e + 1.0, 2.0 + rho, z)
    zr = z**rho
    v = zr * pw * fv
    dv = (rho * zr / z * pw * fv - a1 * zr * pw / one_m * fv + zr * pw * dfv) * dz
    return u, du, v, dv


def _derivatives_pfaff(xt: np.ndarray, p: HypergeomTriple, xs: float):
    """u, u', v, v' from the 2F1(.; -x~/x*) representation."""
    rho, a1, b1, c1 = p.rho, p.a1, p.b1, p.c1
    w = xt / xs
    u = gauss_2f1(a1, b1, c1, -w)
    du = -(a1 * b1 / c1) * gauss_2f1(a1 + 1.0, b1 + 1.0, c1 + 1.0, -w) / xs
    ea, eb = rho + a1, rho + b1
    hv = gauss_2f1(ea, eb, 1.0 + rho, -w)
    dhv = -(ea * eb / (1.0 + rho)) * gauss_2f1(ea + 1.0, eb + 1.0, 2.0 + rho, -w)
    wr = w**rho
    v = wr * hv
    dv = (rho * wr / w * hv + wr * dhv) / xs
    return u, du, v, dv


def wronskian(x_tilde, p: HypergeomTriple, x_star_eff: float, form: str = "direct"):
    """W = u v' - u' v from term-wise differentiated series.

    ``form`` selects the representation: "direct" (argument x~/(x~ + x*)) or
    "pfaff" (argument -x~/x*).
    """
    xt = _as_array(x_tilde)
    if np.any(xt <= 0.0):
        raise DomainError("the Wronskian is evaluated at positive surplus")
    if form == "direct":
        u, du, v, dv = _derivatives_direct(xt, p, x_star_eff)
    elif form == "pfaff":
        u, du, v, dv = _derivatives_pfaff(xt, p, x_star_eff)
    else:
        raise DomainError(f"unknown Wronskian form {form!r}")
    w = _real(u * dv - du * v, "Wronskian")
    if np.any(np.abs(w) < 1e-300):
        raise DegenerateWronskianError("u and v are numerically dependent")
    return _scalar_out(x_tilde, w)


def scaled_wronskian(x_tilde, p: HypergeomTriple, x_star_eff: float):
    """r^(x~) W(x~) = rho x*^(1 - rho) x~^rho, the closed form given by Abel's identity."""
    xt = _as_array(x_tilde)
    rho = p.rho
    return _scalar_out(x_tilde, rho * x_star_eff ** (1.0 - rho) * xt**rho)


def greens_function(x_tilde, s, p: HypergeomTriple, x_star_eff: float):
    """G(x~, s) = (u(s) v(x~) - u(x~) v(s)) / (r^(s) W(s)) for 0 < s <= x~."""
    xt = _as_array(x_tilde)
    ss = _as_array(s)
    xt, ss = np.broadcast_arrays(xt, ss)
    if np.any(ss <= 0.0) or np.any(ss > xt):
        raise DomainError("the Green's function needs 0 < s <= x~")
    u_s = fundamental_u(ss, p, x_star_eff)
    v_s = fundamental_v(ss, p, x_star_eff)
    u_x = fundamental_u(xt, p, x_star_eff)
    v_x = fundamental_v(xt, p, x_star_eff)
    g = (u_s * v_x - u_x * v_s) / scaled_wronskian(ss, p, x_star_eff)
    g = np.where(ss == xt, 0.0, g)
    if np.ndim(x_tilde) == 0 and np.ndim(s) == 0:
        return float(g[0])
    return g


# Spectral machinery -------------------------------------------------------


@lru_cache(maxsize=64)
def _lobatto(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Ascending Chebyshev-Lobatto points on [-1, 1] and barycentric weights."""
    t = -np.cos(np.pi * np.arange(n + 1) / n)
    w = np.where(np.arange(n + 1) % 2 == 0, 1.0, -1.0)
    w[0] *= 0.5
    w[-1] *= 0.5
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def _cheb_coeffs(values: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients of the interpolant through ascending Lobatto values."""
    n = values.size - 1
    coef = fft.dct(values[::-1], type=1) / n
    coef[0] *= 0.5
    coef[-1] *= 0.5
    return coef


def _cumulative_integral(values: np.ndarray) -> np.ndarray:
    """int_{-1}^{t_i} of the Lobatto interpolant, at every node t_i."""
    t, _ = _lobatto(values.size - 1)
    coef = cheb.chebint(_cheb_coeffs(values), lbnd=-1.0)
    out = cheb.chebval(t, coef)
    out[0] = 0.0
    return out


def _barycentric(t_eval: np.ndarray, n: int, values: np.ndarray) -> np.ndarray:
    t, w = _lobatto(n)
    diff = t_eval[:, None] - t[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        k = w[None, :] / diff
        out = (k @ values) / k.sum(axis=1)
    hit = exact.any(axis=1)
    if hit.any():
        out[hit] = values[np.argmax(exact[hit], axis=1)]
    return out


@dataclass(frozen=True, eq=False)
class IntervalTable:
    """Values of one increment at graded Lobatto nodes of one subinterval."""

    lo: float
    hi: float
    grade: int
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.size - 1

    def nodes(self) -> np.ndarray:
        return _nodes(self.lo, self.hi, self.grade, self.n)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        frac = np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        t = 2.0 * frac ** (1.0 / self.grade) - 1.0
        return _barycentric(t, self.n, self.values)


def _nodes(lo: float, hi: float, grade: int, n: int) -> np.ndarray:
    t, _ = _lobatto(n)
    x = lo + (hi - lo) * ((1.0 + t) / 2.0) ** grade
    x[0], x[-1] = lo, hi
    return x


def _node_jacobian(lo: float, hi: float, grade: int, n: int) -> np.ndarray:
    t, _ = _lobatto(n)
    return (hi - lo) * grade / 2.0 * ((1.0 + t) / 2.0) ** (grade - 1)


# Solution container -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PiecewiseSolution:
    """Tables of the increments Delta_1..Delta_J over the subintervals.

    ``increments[j-1][i]`` holds Delta_j on I_{j+i}. For kappa = 1 there are
    no increments and the single interval is [0, limits[1]].
    """

    grid: SubintervalGrid
    triple: HypergeomTriple
    depth: int
    nodes: int
    rho: float
    r_eff: float
    lam: float
    coupling: float
    increments: tuple[tuple[IntervalTable, ...], ...]
    model: ModelParams | None = None
    insurance: InsuranceParams | None = None
    poverty_line: str = "variable"
    refinement_error: float = 0.0

    @property
    def x_star_eff(self) -> float:
        return self.grid.x_star_eff

    @property
    def kappa(self) -> float:
        return self.grid.kappa

    @property
    def x_tilde_max(self) -> float:
        return self.grid.limits[-1]


def _make_context(m: ModelParams, ins: InsuranceParams, poverty_line: str):
    if m.alpha != 1.0:
        raise DomainError("the insured solver covers uniform remaining proportions (alpha = 1) only")
    if net_profit_margin_insured(m, ins, poverty_line) <= 0.0:
        raise ConstraintViolatedError(
            f"insured net-profit condition fails for kappa={ins.kappa:g}, lambda={m.lam:g}"
        )
    rates = derive_rates(m, ins, poverty_line)
    triple = hypergeom_params(m.lam, rates.r_eff, ins.kappa)
    if abs(triple.c1 - round(triple.c1)) < 1e-12 and triple.c1 <= 0.5:
        raise DomainError("lambda/r is a positive integer; u is not a 2F1 series there")
    return rates, triple


def _build_tables(
    grid: SubintervalGrid, p: HypergeomTriple, coupling: float, depth: int, nodes: int
) -> tuple[tuple[IntervalTable, ...], ...]:
    xs, kappa, lim = grid.x_star_eff, grid.kappa, grid.limits
    rho = p.rho
    uv_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def basis(k: int, grade: int):
        key = (k, grade)
        if key not in uv_cache:
            n = nodes * (k + 1)
            x = _nodes(lim[k], lim[k + 1], grade, n)
            uv_cache[key] = (x, fundamental_u(x, p, xs), fundamental_v(x, p, xs))
        return uv_cache[key]

    scale = float(np.max(np.abs(fundamental_v(np.linspace(0.0, lim[-1], 65), p, xs))))
    increments: list[tuple[IntervalTable, ...]] = []
    for j in range(depth):
        # Build Delta_{j+1} on I_{j+1} .. I_depth from Delta_j on I_j .. I_{depth-1}.
        tables = []
        p_acc = 0.0
        q_acc = 0.0
        for k in range(j + 1, depth + 1):
            grade = GRADING if k == j + 1 else 1
            n = nodes * (k + 1)
            x, u, v = basis(k, grade)
            lx = (1.0 - kappa) * x - kappa * xs
            lx = np.clip(lx, lim[k - 1], lim[k])
            if j == 0:
                phi = fundamental_v(lx, p, xs)
            else:
                phi = increments[j - 1][k - 1 - j](lx)
            jac = _node_jacobian(lim[k], lim[k + 1], grade, n)
            rw = rho * xs ** (1.0 - rho) * x**rho
            p_vals = p_acc + _cumulative_integral(u * phi / rw * jac)
            q_vals = q_acc + _cumulative_integral(v * phi / rw * jac)
            delta = coupling * (v * p_vals - u * q_vals)
            tables.append(IntervalTable(lim[k], lim[k + 1], grade, delta))
            p_acc, q_acc = p_vals[-1], q_vals[-1]
        peak = max(float(np.max(np.abs(t.values))) for t in tables)
        if peak < TRUNCATE_REL * scale:
            tables = [IntervalTable(t.lo, t.hi, t.grade, np.zeros_like(t.values)) for t in tables]
        increments.append(tuple(tables))
    return tuple(increments)


def _check_points(grid: SubintervalGrid) -> np.ndarray:
    pts = []
    for lo, hi in zip(grid.limits[1:-1], grid.limits[2:]):
        pts.append(lo + (hi - lo) * np.linspace(0.0, 1.0, 41)[1:])
    return np.concatenate(pts) if pts else np.empty(0)


def build_solution(
    m: ModelParams,
    ins: InsuranceParams,
    depth: int = 3,
    nodes: int = 64,
    x_tilde_max: float | None = None,
    poverty_line: str = "variable",
    refine: bool = True,
) -> PiecewiseSolution:
    """Construct y over I_0..I_depth by the increment recurrence.

    Each interval I_k carries nodes*(k+1) Lobatto nodes. With ``refine`` the
    node count is doubled until two resolutions agree to REFINE_TOL (relative
    to max |y|), at most MAX_DOUBLINGS times.

    For kappa = 1 the subintervals degenerate; y = v on [0, x_tilde_max]
    (default 100 x*).
    """
    depth = int(depth)
    nodes = int(nodes)
    if depth < 0:
        raise DomainError("depth must be non-negative")
    if nodes < 8:
        raise DomainError("nodes must be at least 8")
    rates, triple = _make_context(m, ins, poverty_line)
    xs = rates.x_star_eff
    rho = m.lam / rates.r_eff
    coupling = rho * (1.0 - ins.kappa) / ins.kappa
    common = dict(
        triple=triple,
        rho=rho,
        r_eff=rates.r_eff,
        lam=m.lam,
        coupling=coupling,
        model=m,
        insurance=ins,
        poverty_line=poverty_line,
    )
    if ins.kappa == 1.0:
        top = 100.0 * xs if x_tilde_max is None else float(x_tilde_max)
        grid = SubintervalGrid((0.0, top), 1.0, xs)
        return PiecewiseSolution(grid=grid, depth=0, nodes=nodes, increments=(), **common)
    grid = SubintervalGrid(subinterval_limits(xs, ins.kappa, depth), ins.kappa, xs)
    tables = _build_tables(grid, triple, coupling, depth, nodes)
    err = 0.0
    if refine and depth > 0:
        check = _check_points(grid)
        current = PiecewiseSolution(grid=grid, depth=depth, nodes=nodes, increments=tables, **common)
        y_prev = evaluate_y(current, check)
        for _ in range(MAX_DOUBLINGS):
            nodes *= 2
            tables = _build_tables(grid, triple, coupling, depth, nodes)
            current = PiecewiseSolution(grid=grid, depth=depth, nodes=nodes, increments=tables, **common)
            y_new = evaluate_y(current, check)
            err = float(np.max(np.abs(y_new - y_prev)) / max(np.max(np.abs(y_new)), 1e-300))
            if err <= REFINE_TOL:
                break
            y_prev = y_new
        else:
            raise QuadratureError(
                f"increment tables did not settle to {REFINE_TOL:g} (last change {err:.3g})"
            )
    return PiecewiseSolution(
        grid=grid, depth=depth, nodes=nodes, increments=tables, refinement_error=err, **common
    )


# Evaluation -----------------------------------------------------------------


def _range_check(sol: PiecewiseSolution, xt: np.ndarray) -> None:
    if np.any(xt < 0.0):
        raise DomainError("y is evaluated at non-negative surplus")
    top = sol.x_tilde_max
    if np.any(xt > top * (1.0 + 1e-12)):
        raise OutOfBuiltRangeError(
            f"surplus {float(np.max(xt)):g} exceeds the built range {top:g}; increase depth"
        )


def evaluate_increment(sol: PiecewiseSolution, j: int, x_tilde):
    """Delta_j at x~ >= x~_j (Delta_0 = v); zero below x~_j."""
    xt = _as_array(x_tilde)
    _range_check(sol, xt)
    if j == 0:
        return _scalar_out(x_tilde, fundamental_v(xt, sol.triple, sol.x_star_eff))
    if not (1 <= j <= sol.depth):
        raise DomainError(f"increment index {j} outside 0..{sol.depth}")
    out = np.zeros(xt.shape)
    lim = sol.grid.limits
    for i, table in enumerate(sol.increments[j - 1]):
        k = j + i
        last = k == len(lim) - 2
        mask = (xt >= lim[k]) & ((xt <= lim[k + 1] * (1.0 + 1e-12)) if last else (xt < lim[k + 1]))
        if mask.any():
            out[mask] = table(xt[mask])
    return _scalar_out(x_tilde, out)


def evaluate_partial(sol: PiecewiseSolution, j: int, x_tilde):
    """y_j = v + Delta_1 + ... + Delta_j, defined for x~ >= x~_j."""
    xt = _as_array(x_tilde)
    total = np.asarray(fundamental_v(xt, sol.triple, sol.x_star_eff), dtype=float).copy()
    for i in range(1, j + 1):
        total += evaluate_increment(sol, i, xt)
    return _scalar_out(x_tilde, total)


def evaluate_y(sol: PiecewiseSolution, x_tilde):
    """Piecewise y: y_k on I_k, interpolated from the stored increment tables."""
    xt = _as_array(x_tilde)
    _range_check(sol, xt)
    y = np.asarray(fundamental_v(xt, sol.triple, sol.x_star_eff), dtype=float).copy()
    lim = sol.grid.limits
    for j in range(1, sol.depth + 1):
        y += np.where(xt > lim[j], evaluate_increment(sol, j, xt), 0.0)
    return _scalar_out(x_tilde, y)


def trapping_prob_insured(sol: PiecewiseSolution, A: float, x):
    """f(x) = 1 + A y(x - x*) above the effective critical capital, 1 below it."""
    xv = _as_array(x)
    xs = sol.x_star_eff
    out = np.ones(xv.shape)
    above = xv > xs
    if above.any():
        vals = 1.0 + A * np.asarray(evaluate_y(sol, xv[above] - xs))
        out[above] = [as_probability(float(v)) for v in vals]
    return _scalar_out(x, out)


def insured_generator_residual(sol: PiecewiseSolution, A: float, x: float, rel_step: float = 1e-6) -> float:
    """Insured generator applied to f = 1 + A y(x - x*) at capital x.

    r (x - x*) f'(x) + (lambda / kappa) int_{1-kappa}^1 [f(x y) - f(x)] dy,
    with a central-difference derivative and adaptive quadrature split at the
    points where x y crosses x* or a subinterval limit.
    """
    xs, kappa = sol.x_star_eff, sol.kappa
    x = float(x)
    if x <= xs:
        raise DomainError("residual is evaluated above the critical capital")

    def f(val: float) -> float:
        if val <= xs:
            return 1.0
        return 1.0 + A * float(evaluate_y(sol, val - xs))

    h = rel_step * x
    deriv = (f(x + h) - f(x - h)) / (2.0 * h)
    fx = f(x)
    lo = 1.0 - kappa
    breaks = sorted(
        {(xs + lim) / x for lim in sol.grid.limits if lo < (xs + lim) / x < 1.0}
    )
    val, _ = integrate.quad(
        lambda yv: f(x * yv) - fx, lo, 1.0, points=breaks or None, epsabs=1e-11, epsrel=1e-10, limit=200
    )
    return sol.r_eff * (x - xs) * deriv + sol.lam / kappa * val


def analytic_uninsured_constant(rho: float) -> float:
    """A = -1 / (Gamma(1 + rho) Gamma(1 - rho)) = -sin(pi rho)/(pi rho), the kappa = 1 constant."""
    if not (0.0 < rho < 1.0):
        raise DomainError("the closed-form constant needs 0 < lambda/r < 1")
    return -math.sin(math.pi * rho) / (math.pi * rho)


# Cache ------------------------------------------------------------------


def _model_dict(m: ModelParams | None):
    if m is None:
        return None
    return dict(a=m.a, b=m.b, c_invest=m.c_invest, lam=m.lam, alpha=m.alpha, x_star_base=m.x_star_base)


def save_solution(sol: PiecewiseSolution, path: str | Path) -> None:
    """Write the solution tables to a versioned JSON file."""
    doc = {
        "format": "trapprob-piecewise-solution",
        "version": CACHE_FORMAT_VERSION,
        "grid": {"limits": list(sol.grid.limits), "kappa": sol.grid.kappa, "x_star_eff": sol.grid.x_star_eff},
        "triple": {
            "a1": [sol.triple.a1.real, sol.triple.a1.imag],
            "b1": [sol.triple.b1.real, sol.triple.b1.imag],
            "c1": sol.triple.c1,
        },
        "depth": sol.depth,
        "nodes": sol.nodes,
        "rho": sol.rho,
        "r_eff": sol.r_eff,
        "lam": sol.lam,
        "coupling": sol.coupling,
        "poverty_line": sol.poverty_line,
        "refinement_error": sol.refinement_error,
        "tolerances": {"refine": REFINE_TOL, "truncate": TRUNCATE_REL, "grading": GRADING},
        "model": _model_dict(sol.model),
        "insurance": None
        if sol.insurance is None
        else {"kappa": sol.insurance.kappa, "theta": sol.insurance.theta},
        "increments": [
            [
                {"lo": t.lo, "hi": t.hi, "grade": t.grade, "values": [float(v) for v in t.values]}
                for t in tables
            ]
            for tables in sol.increments
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def load_solution(path: str | Path) -> PiecewiseSolution:
    """Read a file written by :func:`save_solution`."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "trapprob-piecewise-solution":
        raise DomainError(f"{path} is not a solution cache")
    if doc.get("version") != CACHE_FORMAT_VERSION:
        raise DomainError(f"unsupported cache version {doc.get('version')}")
    g = doc["grid"]
    tr = doc["triple"]
    model = None if doc["model"] is None else ModelParams(**doc["model"])
    ins = None if doc["insurance"] is None else InsuranceParams(**doc["insurance"])
    increments = tuple(
        tuple(
            IntervalTable(t["lo"], t["hi"], t["grade"], np.asarray(t["values"], dtype=float))
            for t in tables
        )
        for tables in doc["increments"]
    )
    return PiecewiseSolution(
        grid=SubintervalGrid(tuple(g["limits"]), g["kappa"], g["x_star_eff"]),
        triple=HypergeomTriple(complex(*tr["a1"]), complex(*tr["b1"]), tr["c1"]),
        depth=doc["depth"],
        nodes=doc["nodes"],
        rho=doc["rho"],
        r_eff=doc["r_eff"],
        lam=doc["lam"],
        coupling=doc["coupling"],
        increments=increments,
        model=model,
        insurance=ins,
        poverty_line=doc["poverty_line"],
        refinement_error=doc["refinement_error"],
    )
