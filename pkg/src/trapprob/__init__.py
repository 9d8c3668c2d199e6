"""Trapping probabilities for capital processes with proportional losses."""

__version__ = "0.1.0"

from .analysis import (
    FitResult,
    IntersectionResult,
    LimitProbe,
    SweepRow,
    fit_A,
    fit_from_simulation,
    intersection_xc,
    probe_limit,
    sweep_xc_distance,
)
from .closed_form import (
    DecayQuery,
    UninsuredCurveSpec,
    asymptotic_power,
    decay_exponent,
    trapping_prob_exp_losses,
    trapping_prob_uninsured,
    trapping_prob_uninsured_alt,
)
from .errors import (
    ConstraintViolatedError,
    DomainError,
    NonConvergedError,
    NonConvergenceWarning,
    TrappingError,
)
from .insured_solver import (
    HypergeomTriple,
    PiecewiseSolution,
    SubintervalGrid,
    build_solution,
    evaluate_y,
    fundamental_u,
    fundamental_v,
    greens_function,
    hypergeom_params,
    load_solution,
    save_solution,
    trapping_prob_insured,
    wronskian,
)
from .model import (
    DerivedRates,
    InsuranceParams,
    ModelParams,
    derive_rates,
    insured_bound,
    net_profit_margin_insured,
    net_profit_margin_uninsured,
)
from .simulator import SimConfig, SimEstimate, estimate_curve
from .special_functions import SeriesControl, gauss_2f1, ln_gamma, reg_upper_inc_gamma

__all__ = [name for name in dir() if not name.startswith("_")]
