import warnings

import numpy as np
import pytest

from trapprob.analysis import (
    aitken,
    fit_A,
    fit_from_simulation,
    fit_grid,
    intersection_xc,
    probe_limit,
    sweep_xc_distance,
)
from trapprob.closed_form import trapping_prob_uninsured
from trapprob.errors import DegenerateFitError, InsufficientDataError, NonConvergenceWarning
from trapprob.insured_solver import (
    analytic_uninsured_constant,
    build_solution,
    fundamental_v,
    trapping_prob_insured,
)
from trapprob.model import InsuranceParams, ModelParams
from trapprob.simulator import SimConfig, SimEstimate

REF_MODEL = ModelParams(0.1, 1.4, 0.4, 1.0, x_star_base=1.0)
REF_INS = InsuranceParams(0.3, 0.5)


@pytest.fixture(scope="module")
def ref():
    return build_solution(REF_MODEL, REF_INS)


@pytest.fixture(scope="module")
def kappa_half():
    out = {}
    for lam in (0.25, 0.5):
        m = REF_MODEL.with_(lam=lam)
        ins = InsuranceParams(0.5, 0.5)
        out[lam] = (m, ins, build_solution(m, ins, depth=6, nodes=32))
    return out


def synthetic(sol, A, se=0.01, scale=1.0):
    grid = fit_grid(sol, 20)
    v = fundamental_v(grid - sol.x_star_eff, sol.triple, sol.x_star_eff)
    return [SimEstimate(float(x), 1.0 + scale * A * float(vi), se, 1000) for x, vi in zip(grid, v)]


def test_fit_recovers_exact_constant(ref):
    res = fit_A(synthetic(ref, -3.4855), ref)
    assert res.a_hat == pytest.approx(-3.4855, abs=1e-12)
    assert res.residual_norm < 1e-10 and res.n_points == 20
    assert res.fit_range == pytest.approx((1.6, 1.6 + ref.grid.limits[1]))


def test_fit_is_linear_in_the_deviation(ref):
    base = fit_A(synthetic(ref, -2.0), ref).a_hat
    scaled = fit_A(synthetic(ref, -2.0, scale=3.0), ref).a_hat
    assert scaled == pytest.approx(3.0 * base, rel=1e-12)


def test_fit_all_ones_gives_zero(ref):
    est = [SimEstimate(float(x), 1.0, 0.0, 100) for x in fit_grid(ref, 10)]
    assert fit_A(est, ref).a_hat == 0.0


def test_fit_ignores_points_outside_first_interval(ref):
    est = synthetic(ref, -3.0) + [SimEstimate(ref.x_star_eff + 5.0, 0.0, 0.01, 100)]
    assert fit_A(est, ref).n_points == 20


def test_fit_errors(ref):
    with pytest.raises(InsufficientDataError):
        fit_A([SimEstimate(1.7, 0.9, 0.01, 100)], ref)
    with pytest.raises(DegenerateFitError):
        fit_A([SimEstimate(1.6, 1.0, 0.0, 10), SimEstimate(1.6, 1.0, 0.0, 10)], ref)


def test_fit_from_simulation_runs(ref):
    res, est = fit_from_simulation(ref, SimConfig(200, horizon=100.0), n_points=8)
    assert len(est) == 8 and res.n_points == 8
    assert -6.0 < res.a_hat < -1.5


def test_aitken_exact_on_geometric_sequence():
    seq = [2.0 + 0.5**k for k in range(5)]
    assert aitken(seq) == pytest.approx(2.0, abs=1e-14)
    assert aitken([1.0, 1.0, 1.0]) == 1.0


def test_probe_limit_full_cover_matches_analytic_constant():
    m = REF_MODEL.with_(lam=0.3)
    sol = build_solution(m, InsuranceParams(1.0))
    probe = probe_limit(sol)
    assert probe.implied_a == pytest.approx(analytic_uninsured_constant(m.rho), abs=1e-3)


def test_probe_limit_reference_set_converges():
    sol = build_solution(REF_MODEL, REF_INS, depth=6, nodes=32)
    probe = probe_limit(sol)
    assert len(probe.values) == 7  # endpoints x~_1..x~_7
    assert probe.implied_a == pytest.approx(-3.4855, abs=5e-3)


def test_probe_limit_shallow_build_warns():
    sol = build_solution(REF_MODEL, REF_INS, depth=0)
    with pytest.warns(NonConvergenceWarning):
        probe_limit(sol)


@pytest.mark.parametrize("lam, expected", [(0.25, 1.0909885), (0.5, 1.1566320)])
def test_intersection_variable_line(kappa_half, lam, expected):
    m, ins, sol = kappa_half[lam]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        A = probe_limit(sol).implied_a
    res = intersection_xc(m, ins, sol, A)
    assert res.x_c == pytest.approx(expected, abs=1e-6)
    assert res.bracket[1] - res.bracket[0] <= res.tolerance
    # the insured curve is above the uninsured one just left of x_c and below just right
    for x, sign in ((res.x_c - 1e-4, 1.0), (res.x_c + 1e-3, -1.0)):
        diff = float(trapping_prob_insured(sol, A, x)) - float(trapping_prob_uninsured(x, m))
        assert sign * diff > 0


@pytest.mark.parametrize("lam", [0.25, 0.5])
def test_intersection_fixed_line_has_none(lam):
    m = REF_MODEL.with_(lam=lam)
    ins = InsuranceParams(0.5, 0.5)
    sol = build_solution(m, ins, depth=6, nodes=32, poverty_line="fixed")
    A = probe_limit(sol).implied_a
    assert intersection_xc(m, ins, sol, A).x_c is None


def test_sweep_markers_and_order():
    rows = sweep_xc_distance([0.5, 0.9], [0.3, 0.6], 0.5, REF_MODEL, depth=4, nodes=24)
    assert [(r.kappa, r.lam) for r in rows] == [(0.5, 0.3), (0.5, 0.6), (0.9, 0.3), (0.9, 0.6)]
    assert rows[1].status == "skipped:uninsured-certain" and rows[3].status == "skipped:uninsured-certain"
    for row in (rows[0], rows[2]):
        assert row.status == "ok" and row.distance > 0
        assert row.distance == pytest.approx(row.x_c - 1.0)


def test_sweep_insured_constraint_marker():
    # a heavy loading leaves too little drift for the retained losses
    rows = sweep_xc_distance([0.9], [0.45], 30.0, REF_MODEL, depth=2, nodes=16)
    assert rows[0].status == "skipped:insured-constraint"


def test_sweep_argument_errors():
    with pytest.raises(ValueError):
        sweep_xc_distance([0.5], [0.3], 0.5, REF_MODEL, a_method="analytic")
    with pytest.raises(ValueError):
        sweep_xc_distance([0.5], [0.3], 0.5, REF_MODEL, a_method="fit")
