"""Closed-form filter solutions: region logic, anchors, and feasibility."""

import numpy as np
import pytest

from cbflab import (
    ConfigurationError,
    InternalInconsistencyError,
    LieData,
    RegionTag,
    classify_region,
    lie_data,
    load,
    solve,
)
from cbflab.qp import in_clf_on_cbf_on2
from conftest import sample_states

P_GRID = (0.1, 1.0, 10.0, 100.0)
ROW_TOL = 1e-9


def _lie(scenario, x):
    return lie_data(scenario.model, scenario.certs, x)


def _synthetic(f_v, lg_v, f_h, lg_h, x=(0.0, 0.0)):
    """Hand-built Lie row for exercising branches that built-ins never hit."""
    lg_v = np.asarray(lg_v, dtype=np.float64)
    lg_h = np.asarray(lg_h, dtype=np.float64)
    return LieData(
        x=np.asarray(x, dtype=np.float64), v=1.0, h=1.0,
        lf_v=f_v - 1.0, lg_v=lg_v, f_v=f_v,
        lf_h=f_h - 1.0, lg_h=lg_h, f_h=f_h,
    )


# --- classification ---------------------------------------------------------

def test_classify_inactive_state(ex1):
    assert classify_region(_lie(ex1, [1.0, 0.0]), 1.0) is RegionTag.CLF_OFF_CBF_OFF


def test_classify_origin_is_clf_active(ex1):
    # f_v = 0 exactly: the CLF row binds with zero multiplier numerator
    assert classify_region(_lie(ex1, [0.0, 0.0]), 1.0) is RegionTag.CLF_ON_CBF_OFF


def test_classify_doubly_active(ex1):
    assert classify_region(_lie(ex1, [0.0, 6.0]), 1.0) is RegionTag.CLF_ON_CBF_ON2


def test_membership_predicate(ex1):
    assert in_clf_on_cbf_on2(_lie(ex1, [0.0, 6.0]), 1.0)
    assert not in_clf_on_cbf_on2(_lie(ex1, [1.0, 0.0]), 1.0)
    assert not in_clf_on_cbf_on2(_lie(ex1, [0.0, 0.0]), 1.0)


# --- anchors ----------------------------------------------------------------

def test_solution_at_rest_point_above_obstacle(ex1):
    sol = solve(_lie(ex1, [0.0, 6.0]), 1.0)
    assert sol.region is RegionTag.CLF_ON_CBF_ON2
    assert np.allclose(sol.u_star, [0.0, 6.0], atol=1e-12)
    assert sol.lambda1 == pytest.approx(18.0)
    assert sol.lambda2 == pytest.approx(28.5)
    assert sol.delta == pytest.approx(18.0)
    # closed loop is at rest there
    assert np.allclose(-np.array([0.0, 6.0]) + sol.u_star, 0.0)


def test_solution_unstable_drift(ex3):
    sol = solve(_lie(ex3, [1.0, 0.0]), 1.0)
    assert sol.region is RegionTag.CLF_ON_CBF_OFF
    assert np.allclose(sol.u_star, [-0.75, 0.0])
    assert sol.delta == pytest.approx(0.75)
    assert sol.lambda1 == pytest.approx(0.75)
    assert sol.lambda2 == 0.0


def test_solution_origin(ex1):
    sol = solve(_lie(ex1, [0.0, 0.0]), 1.0)
    assert np.allclose(sol.u_star, 0.0)
    assert sol.delta == 0.0
    assert sol.lambda1 == 0.0
    assert sol.lambda2 == 0.0


def test_inactive_filter_returns_zero(ex1):
    sol = solve(_lie(ex1, [1.0, 0.0]), 1.0)
    assert np.allclose(sol.u_star, 0.0)
    assert sol.delta == 0.0


# --- sampled invariants -----------------------------------------------------

def test_solution_feasibility_and_stationarity():
    for i, name in enumerate(("example1", "example2", "example3")):
        sc = load(name)
        for x in sample_states(sc.box, 2000, seed=11 + i):
            lie = _lie(sc, x)
            for p in P_GRID:
                sol = solve(lie, p)
                r_clf = lie.f_v + float(lie.lg_v @ sol.u_star) - sol.delta
                r_cbf = lie.f_h + float(lie.lg_h @ sol.u_star)
                assert r_clf <= ROW_TOL
                assert r_cbf >= -ROW_TOL
                assert sol.lambda1 >= 0.0 and sol.lambda2 >= 0.0
                assert sol.delta == sol.lambda1 / p
                stat = sol.u_star + sol.lambda1 * lie.lg_v - sol.lambda2 * lie.lg_h
                assert float(np.max(np.abs(stat))) <= 1e-9


def test_active_regions_have_tight_rows():
    sc = load("example1")
    for x in sample_states(sc.box, 2000, seed=29):
        lie = _lie(sc, x)
        sol = solve(lie, 1.0)
        if sol.region.cbf_active and float(lie.lg_h @ lie.lg_h) > 0.0:
            assert lie.f_h + float(lie.lg_h @ sol.u_star) == pytest.approx(0.0, abs=1e-8)
        if sol.region.clf_active:
            r_clf = lie.f_v + float(lie.lg_v @ sol.u_star) - sol.delta
            assert r_clf == pytest.approx(0.0, abs=1e-8)


def test_classification_covers_weight_grid():
    # every sampled state classifies without an inconsistency, at every weight
    for name in ("example1", "example2", "example3", "example5", "example6"):
        sc = load(name)
        for x in sample_states(sc.box, 500, seed=101):
            lie = _lie(sc, x)
            for p in P_GRID:
                classify_region(lie, p)


# --- vanishing CBF direction ------------------------------------------------

def test_vanishing_row_subcases():
    lie = _synthetic(f_v=-1.0, lg_v=[1.0, 0.0], f_h=0.0, lg_h=[0.0, 0.0])
    sol = solve(lie, 1.0)
    assert sol.region is RegionTag.CLF_OFF_CBF_ON1
    assert np.allclose(sol.u_star, 0.0)

    lie = _synthetic(f_v=2.0, lg_v=[1.0, 0.0], f_h=0.0, lg_h=[0.0, 0.0])
    sol = solve(lie, 1.0)
    assert sol.region is RegionTag.CLF_ON_CBF_ON1
    assert np.allclose(sol.u_star, [-1.0, 0.0])  # -f_v/(1/p + a) * lg_v
    assert sol.lambda2 == 0.0


def test_flat_barrier_scenario_never_activates():
    sc = load("example5-noobstacle")
    for x in sample_states(sc.box, 200, seed=5):
        sol = solve(_lie(sc, x), 1.0)
        assert not sol.region.cbf_active


def test_unsatisfiable_barrier_row_is_reported():
    lie = _synthetic(f_v=-1.0, lg_v=[1.0, 0.0], f_h=-1.0, lg_h=[0.0, 0.0])
    with pytest.raises(InternalInconsistencyError):
        solve(lie, 1.0)


def test_weight_validation(ex1):
    lie = _lie(ex1, [1.0, 0.0])
    for bad in (0.0, -1.0, float("nan"), float("inf")):
        with pytest.raises(ConfigurationError):
            solve(lie, bad)
        with pytest.raises(ConfigurationError):
            classify_region(lie, bad)
