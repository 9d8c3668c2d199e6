"""Closed-form trapping probabilities for the uninsured process and the decay exponent."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import (
    ConstraintViolatedError,
    DomainError,
    NoNegativeRootError,
    ProbabilityRangeError,
)
from .model import ModelParams
from .special_functions import gauss_2f1, reg_upper_inc_gamma

__all__ = [
    "PROBABILITY_SLACK",
    "UninsuredCurveSpec",
    "DecayQuery",
    "as_probability",
    "uninsured_prefactor",
    "trapping_prob_uninsured",
    "trapping_prob_uninsured_alt",
    "trapping_prob_exp_losses",
    "asymptotic_power",
    "generator_residual_uninsured",
    "decay_function",
    "decay_exponent",
]

# Largest excursion outside [0, 1] still attributed to round-off.
PROBABILITY_SLACK = 1e-9


def as_probability(value: float) -> float:
    """Clamp to [0, 1] after checking the overshoot is round-off sized."""
    if not math.isfinite(value):
        raise ProbabilityRangeError(f"probability evaluated to {value}")
    if value < -PROBABILITY_SLACK or value > 1.0 + PROBABILITY_SLACK:
        raise ProbabilityRangeError(f"probability {value!r} is outside [0, 1]")
    return min(1.0, max(0.0, value))


def _map(func, x):
    """Apply a scalar function to a scalar or array argument."""
    if np.ndim(x) == 0:
        return func(float(x))
    xs = np.asarray(x, dtype=float)
    out = np.empty(xs.shape)
    for idx, xi in np.ndenumerate(xs):
        out[idx] = func(float(xi))
    return out


@dataclass(frozen=True)
class UninsuredCurveSpec:
    """A parameter set together with an increasing grid of capital levels."""

    model: ModelParams
    grid: tuple[float, ...]

    def __post_init__(self) -> None:
        grid = tuple(float(v) for v in self.grid)
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise DomainError("grid must be strictly increasing")
        if grid and grid[0] < self.model.x_star_base:
            raise DomainError("grid must not start below the critical capital")
        if self.model.alpha - self.model.rho <= 0.0:
            raise ConstraintViolatedError("lambda/r >= alpha: trapping is certain")
        object.__setattr__(self, "grid", grid)

    def evaluate(self) -> np.ndarray:
        return np.asarray(trapping_prob_uninsured(np.asarray(self.grid), self.model))


def _check_uninsured(m: ModelParams) -> tuple[float, float, float]:
    rho = m.lam / m.r
    if rho >= m.alpha:
        raise ConstraintViolatedError(
            f"lambda/r={rho:.6g} >= alpha={m.alpha:g}: trapping is certain"
        )
    return m.alpha, rho, m.x_star_base


def uninsured_prefactor(alpha: float, rho: float) -> float:
    """Gamma(alpha) / (Gamma(rho) Gamma(alpha - rho + 1))."""
    return math.exp(math.lgamma(alpha) - math.lgamma(rho) - math.lgamma(alpha - rho + 1.0))


def _below_line(x: float, x_star: float) -> None:
    if x < x_star:
        raise DomainError(f"capital x={x:g} lies below the critical capital {x_star:g}")


def trapping_prob_uninsured(x, m: ModelParams):
    """Trapping probability of the uninsured process from its 2F1 closed form.

    f(x) = C (x/x*)^(rho - alpha) 2F1(alpha - rho, 1 - rho; alpha - rho + 1; x*/x)
    with rho = lambda/r and C = Gamma(alpha) / (Gamma(rho) Gamma(alpha - rho + 1)).
    """
    alpha, rho, xs = _check_uninsured(m)
    pref = uninsured_prefactor(alpha, rho)
    p1, p2, p3 = alpha - rho, 1.0 - rho, alpha - rho + 1.0

    def one(xv: float) -> float:
        _below_line(xv, xs)
        ratio = xs / xv
        hyp = gauss_2f1(p1, p2, p3, ratio).real
        return as_probability(pref * ratio ** (alpha - rho) * hyp)

    return _map(one, x)


def trapping_prob_uninsured_alt(x, m: ModelParams):
    """Equivalent form with the hypergeometric argument 1 - x*/x.

    f(x) = 1 - D (1 - x*/x)^rho 2F1(rho, 1 + rho - alpha; 1 + rho; 1 - x*/x),
    D = Gamma(alpha) / (Gamma(rho + 1) Gamma(alpha - rho)).
    """
    alpha, rho, xs = _check_uninsured(m)
    pref = math.exp(math.lgamma(alpha) - math.lgamma(rho + 1.0) - math.lgamma(alpha - rho))

    def one(xv: float) -> float:
        _below_line(xv, xs)
        arg = 1.0 - xs / xv
        if arg == 0.0:
            return 1.0
        hyp = gauss_2f1(rho, 1.0 + rho - alpha, 1.0 + rho, arg).real
        return as_probability(1.0 - pref * arg**rho * hyp)

    return _map(one, x)


def trapping_prob_exp_losses(x, mu: float, lam: float, r: float, x_star: float):
    """Trapping probability when losses are Exp(mu) amounts: Q(lambda/r, mu (x - x*))."""
    if not (mu > 0.0 and lam > 0.0 and r > 0.0 and x_star > 0.0):
        raise DomainError("mu, lambda, r and x_star must be positive")
    shape = lam / r

    def one(xv: float) -> float:
        _below_line(xv, x_star)
        return reg_upper_inc_gamma(shape, mu * (xv - x_star))

    return _map(one, x)


def asymptotic_power(x, m: ModelParams):
    """Leading power-law behaviour C (x/x*)^(lambda/r - alpha) for large capital."""
    alpha, rho, xs = _check_uninsured(m)
    pref = uninsured_prefactor(alpha, rho)

    def one(xv: float) -> float:
        _below_line(xv, xs)
        return pref * (xv / xs) ** (rho - alpha)

    return _map(one, x)


def generator_residual_uninsured(x: float, m: ModelParams, rel_step: float = 1e-5) -> float:
    """Residual of the uninsured generator applied to the closed form at x > x*.

    r (x - x*) f'(x) - lambda f(x) + (lambda alpha / x^alpha) int_0^x f(u) u^(alpha-1) du,
    with f = 1 below x*. The derivative is a central difference and the
    integral uses adaptive quadrature.
    """
    alpha, _, xs = _check_uninsured(m)
    x = float(x)
    if x <= xs:
        raise DomainError("the residual is evaluated strictly above the critical capital")
    h = rel_step * x
    h = min(h, 0.5 * (x - xs))

    def f(u: float) -> float:
        return float(trapping_prob_uninsured(u, m))

    deriv = (f(x + h) - f(x - h)) / (2.0 * h)
    upper, _ = integrate.quad(
        lambda u: f(u) * u ** (alpha - 1.0), xs, x, epsabs=1e-13, epsrel=1e-12, limit=200
    )
    integral = xs**alpha / alpha + upper
    return m.r * (x - xs) * deriv - m.lam * f(x) + m.lam * alpha / x**alpha * integral


@dataclass(frozen=True)
class DecayQuery:
    """Inputs of the decay equation for the tail exponent gamma."""

    alpha: float
    lam: float
    r: float
    kappa: float = 1.0

    def __post_init__(self) -> None:
        for name in ("alpha", "lam", "r"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"{name} must be positive, got {value}")
            object.__setattr__(self, name, value)
        kappa = float(self.kappa)
        if not (0.0 < kappa <= 1.0):
            raise DomainError(f"kappa must lie in (0, 1], got {kappa}")
        object.__setattr__(self, "kappa", kappa)


_QUAD_OPTS = dict(epsabs=1e-11, epsrel=1e-12, limit=200)


def _log_remaining(t: float, q: DecayQuery) -> float:
    # log(1 - kappa + kappa w) with w = t^(1/alpha).
    return math.log1p(-q.kappa * (1.0 - t ** (1.0 / q.alpha)))


def _jump_moment_minus_one(gamma: float, q: DecayQuery) -> float:
    """E[Y^gamma] - 1 for the retained proportion Y = 1 - kappa (1 - Z)."""
    if q.kappa == 1.0:
        return q.alpha / (gamma + q.alpha) - 1.0
    if q.alpha == 1.0:
        k = q.kappa
        if gamma == -1.0:
            return -math.log1p(-k) / k - 1.0
        g1 = gamma + 1.0
        return -math.expm1(g1 * math.log1p(-k)) / (k * g1) - 1.0
    # Substituting Z = t^(1/alpha) leaves a bounded integrand on [0, 1].
    val, _ = integrate.quad(
        lambda t: math.expm1(gamma * _log_remaining(t, q)), 0.0, 1.0, **_QUAD_OPTS
    )
    return val


def decay_function(gamma: float, q: DecayQuery) -> float:
    """Left side of the decay equation, r gamma - lambda + lambda E[Y^gamma].

    Returns +inf once E[Y^gamma] overflows (large negative gamma).
    """
    try:
        moment = _jump_moment_minus_one(gamma, q)
    except OverflowError:
        return math.inf
    return q.r * gamma + q.lam * moment


def _reduced(gamma: float, q: DecayQuery) -> float:
    """decay_function / gamma, which removes the trivial root at zero."""
    if gamma == 0.0:
        if q.kappa == 1.0:
            return q.r - q.lam / q.alpha
        if q.alpha == 1.0:
            k = q.kappa
            return q.r + q.lam * (1.0 + (1.0 - k) / k * math.log1p(-k))
        val, _ = integrate.quad(lambda t: _log_remaining(t, q), 0.0, 1.0, **_QUAD_OPTS)
        return q.r + q.lam * val
    return decay_function(gamma, q) / gamma


def decay_exponent(q: DecayQuery, scan_points: int = 2000, eps: float = 1e-9) -> float:
    """Largest negative root gamma of the decay equation.

    The left side divided by gamma is scanned from -eps downwards over
    (-alpha - lambda/r - 10, -eps]; for kappa < 1 the lower end is widened
    geometrically if no sign change is found there. The first bracket is
    refined with Brent's method. With kappa = 1 the domain is gamma > -alpha
    and the root is lambda/r - alpha.
    """
    rho = q.lam / q.r
    if q.kappa == 1.0:
        lo_limits = [-q.alpha * (1.0 - 1e-12)]
    else:
        base = q.alpha + rho + 10.0
        lo_limits = [-base * 4.0**k for k in range(6)]
    upper = -eps
    v_upper = _reduced(upper, q)
    for lo in lo_limits:
        for g in np.linspace(upper, lo, scan_points)[1:]:
            g = float(g)
            v = _reduced(g, q)
            if v == 0.0:
                return g
            if (v > 0.0) != (v_upper > 0.0):
                if math.isfinite(v):
                    root = optimize.brentq(
                        _reduced, g, upper, args=(q,), xtol=1e-14, rtol=1e-15, maxiter=200
                    )
                else:
                    root = optimize.bisect(_reduced, g, upper, args=(q,), xtol=1e-14, maxiter=200)
                return float(root)
            upper, v_upper = g, v
    raise NoNegativeRootError(
        f"decay equation has no negative root for alpha={q.alpha:g}, lambda/r={rho:g}, kappa={q.kappa:g}"
    )
