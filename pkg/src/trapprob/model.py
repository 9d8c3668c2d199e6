"""Household economics, insured rates and net-profit constraints."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import (
    DomainError,
    NoAdjustmentCoefficientError,
    PremiumExceedsIncomeError,
)
from .special_functions import gauss_2f1

__all__ = [
    "ModelParams",
    "InsuranceParams",
    "DerivedRates",
    "POVERTY_LINES",
    "derive_rates",
    "net_profit_margin_uninsured",
    "insured_bound",
    "insured_bound_uniform",
    "net_profit_margin_insured",
    "adjustment_coefficient_uninsured",
    "lambda_boundary",
]

POVERTY_LINES = ("variable", "fixed")


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0.0):
        raise DomainError(f"{name} must be a finite positive number, got {value}")
    return value


def _unit_open(name: str, value: float) -> float:
    value = float(value)
    if not (0.0 < value < 1.0):
        raise DomainError(f"{name} must lie in (0, 1), got {value}")
    return value


@dataclass(frozen=True)
class ModelParams:
    """Parameters of the uninsured capital process.

    Supply either ``x_star_base`` or ``i_star``; the other is derived through
    x* = I*/b. Supplying both requires them to agree.
    """

    a: float
    b: float
    c_invest: float
    lam: float
    alpha: float = 1.0
    x_star_base: float | None = None
    i_star: float | None = None

    def __post_init__(self) -> None:
        _unit_open("a", self.a)
        _positive("b", self.b)
        _unit_open("c_invest", self.c_invest)
        _positive("lam", self.lam)
        _positive("alpha", self.alpha)
        x_star, i_star = self.x_star_base, self.i_star
        if x_star is None and i_star is None:
            raise DomainError("one of x_star_base or i_star must be given")
        if x_star is None:
            x_star = _positive("i_star", i_star) / self.b
        elif i_star is None:
            i_star = _positive("x_star_base", x_star) * self.b
        else:
            _positive("x_star_base", x_star)
            _positive("i_star", i_star)
            if not math.isclose(i_star / self.b, x_star, rel_tol=1e-12):
                raise DomainError(
                    f"x_star_base={x_star} is inconsistent with i_star/b={i_star / self.b}"
                )
        object.__setattr__(self, "x_star_base", float(x_star))
        object.__setattr__(self, "i_star", float(i_star))
        for name in ("a", "b", "c_invest", "lam", "alpha"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def r(self) -> float:
        """Uninsured capital growth rate (1 - a) b c."""
        return (1.0 - self.a) * self.b * self.c_invest

    @property
    def rho(self) -> float:
        """lambda / r for the uninsured process."""
        return self.lam / self.r

    def with_(self, **changes) -> "ModelParams":
        """Copy with fields replaced; changing b keeps x* fixed unless told otherwise."""
        fields = dict(
            a=self.a,
            b=self.b,
            c_invest=self.c_invest,
            lam=self.lam,
            alpha=self.alpha,
            x_star_base=self.x_star_base,
        )
        if "i_star" in changes:
            fields.pop("x_star_base")
        fields.update(changes)
        return ModelParams(**fields)


@dataclass(frozen=True)
class InsuranceParams:
    """Proportional cover: the household retains a fraction kappa of each loss."""

    kappa: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        kappa = float(self.kappa)
        theta = float(self.theta)
        if not (0.0 < kappa <= 1.0):
            raise DomainError(f"kappa must lie in (0, 1], got {kappa}")
        if not (math.isfinite(theta) and theta >= 0.0):
            raise DomainError(f"theta must be finite and >= 0, got {theta}")
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "theta", theta)

    @property
    def uninsured(self) -> bool:
        return self.kappa == 1.0


@dataclass(frozen=True)
class DerivedRates:
    """Premium rate and the growth rate / critical capital it induces."""

    premium: float
    r_eff: float
    x_star_eff: float


def derive_rates(
    m: ModelParams, ins: InsuranceParams, poverty_line: str = "variable"
) -> DerivedRates:
    """Premium by the expected value principle and the resulting rates.

    ``poverty_line="variable"`` lets the critical capital rise with the
    premium, x*(kappa) = I*/(b - pi). ``"fixed"`` keeps the uninsured x*.
    """
    if poverty_line not in POVERTY_LINES:
        raise DomainError(f"poverty_line must be one of {POVERTY_LINES}, got {poverty_line!r}")
    if ins.kappa == 1.0:
        return DerivedRates(premium=0.0, r_eff=m.r, x_star_eff=m.x_star_base)
    premium = (1.0 + ins.theta) * (1.0 - ins.kappa) * m.lam / (m.alpha + 1.0)
    if premium >= m.b:
        raise PremiumExceedsIncomeError(
            f"premium {premium:g} is not below the income rate b={m.b:g}"
        )
    net_income = m.b - premium
    r_eff = (1.0 - m.a) * net_income * m.c_invest
    x_star_eff = m.i_star / net_income if poverty_line == "variable" else m.x_star_base
    return DerivedRates(premium=premium, r_eff=r_eff, x_star_eff=x_star_eff)


def net_profit_margin_uninsured(m: ModelParams) -> float:
    """alpha - lambda/r; positive iff trapping is not certain."""
    return m.alpha - m.lam / m.r


def insured_bound_uniform(kappa: float) -> float:
    """Bound on r_eff/lambda for alpha = 1: 1 + ((1 - kappa)/kappa) ln(1 - kappa)."""
    kappa = float(kappa)
    if not (0.0 < kappa <= 1.0):
        raise DomainError(f"kappa must lie in (0, 1], got {kappa}")
    if kappa == 1.0:
        return 1.0
    return 1.0 + (1.0 - kappa) / kappa * math.log1p(-kappa)


def insured_bound(alpha: float, kappa: float) -> float:
    """Right-hand side B(alpha, kappa) of the insured net-profit condition r_eff/lambda > B.

    B = E[-log Y] with Y = 1 - kappa (1 - Z), Z ~ Beta(alpha, 1), evaluated as
    kappa / ((alpha + 1)(1 - kappa)) * 2F1(1, alpha + 1; alpha + 2; -kappa/(1 - kappa)).
    At kappa = 1 this is 1/alpha.
    """
    alpha = _positive("alpha", alpha)
    kappa = float(kappa)
    if not (0.0 < kappa <= 1.0):
        raise DomainError(f"kappa must lie in (0, 1], got {kappa}")
    if kappa == 1.0:
        return 1.0 / alpha
    ratio = kappa / (1.0 - kappa)
    hyp = gauss_2f1(1.0, alpha + 1.0, alpha + 2.0, -ratio)
    return ratio / (alpha + 1.0) * hyp.real


def net_profit_margin_insured(
    m: ModelParams, ins: InsuranceParams, poverty_line: str = "variable"
) -> float:
    """r_eff/lambda - B(alpha, kappa); positive iff the adjustment coefficient exists."""
    rates = derive_rates(m, ins, poverty_line)
    if m.alpha == 1.0:
        bound = insured_bound_uniform(ins.kappa)
    else:
        bound = insured_bound(m.alpha, ins.kappa)
    return rates.r_eff / m.lam - bound


def adjustment_coefficient_uninsured(m: ModelParams) -> float:
    """Positive root R of E[Z^-R] E[exp(-R r T)] = 1, which is alpha - lambda/r."""
    margin = net_profit_margin_uninsured(m)
    if margin <= 0.0:
        raise NoAdjustmentCoefficientError(
            f"lambda/r={m.lam / m.r:g} >= alpha={m.alpha:g}: no positive adjustment coefficient"
        )
    return margin


def lambda_boundary(m: ModelParams, ins: InsuranceParams) -> float:
    """Largest loss intensity satisfying the insured net-profit condition.

    Solves r_eff(lambda)/lambda = B for lambda with the variable poverty line;
    since r_eff is affine in lambda this is explicit.
    """
    k = (1.0 - m.a) * m.c_invest
    bound = 1.0 / m.alpha if ins.kappa == 1.0 else insured_bound(m.alpha, ins.kappa)
    load = (1.0 + ins.theta) * (1.0 - ins.kappa) / (m.alpha + 1.0)
    return k * m.b / (bound + k * load)
