"""Closed-loop equilibrium search, classification, and certificates."""

import math

import numpy as np
import pytest

from cbflab import (
    BoundUnavailableError,
    CertificatePair,
    ComparisonFunction,
    ConfigurationError,
    DynamicsModel,
    EquilibriumKind,
    EstimateUnavailableError,
    IndeterminateError,
    ScalarCertificate,
    Scenario,
    SearchGrid,
    boundary_persistence_check,
    closed_loop_residual,
    confinement_bound,
    find_equilibria,
    interior_certificate,
    lie_data,
    solve,
    sup_ratio_estimate,
)

GRID = SearchGrid(((-8.0, 8.0), (-8.0, 8.0)), resolution=81)

INTERIOR_PAIR_P1 = math.sqrt(112.0 / 15.0)      # 2.7325202...
INTERIOR_PAIR_P10 = math.sqrt(112.0 / 150.0)    # 0.8640987...


def _kinds(search):
    return sorted(r.kind.name for r in search.reports)


def _of_kind(search, kind):
    return [r for r in search.reports if r.kind is kind]


@pytest.fixture(scope="module")
def ex2_by_p(ex2):
    return {p: find_equilibria(ex2, p, GRID) for p in (0.1, 1.0, 10.0)}


@pytest.fixture(scope="module")
def ex1_by_p(ex1):
    return {p: find_equilibria(ex1, p, GRID) for p in (0.1, 1.0, 10.0, 100.0)}


@pytest.fixture(scope="module")
def ex3_by_p(ex3):
    return {p: find_equilibria(ex3, p, GRID) for p in (1.0, 10.0, 100.0)}


# --- positions ---------------------------------------------------------------

def test_interior_pair_positions(ex2_by_p):
    for p, radius in ((1.0, INTERIOR_PAIR_P1), (10.0, INTERIOR_PAIR_P10)):
        interior = _of_kind(ex2_by_p[p], EquilibriumKind.INTERIOR)
        assert len(interior) == 2
        xs = sorted(r.location[0] for r in interior)
        assert xs[0] == pytest.approx(-radius, abs=1e-6)
        assert xs[1] == pytest.approx(radius, abs=1e-6)
        assert all(abs(r.location[1]) <= 1e-6 for r in interior)


def test_low_weight_moves_pair_to_boundary(ex2_by_p):
    search = ex2_by_p[0.1]
    assert _kinds(search) == ["BOUNDARY2", "BOUNDARY2", "ORIGIN"]
    xs = sorted(r.location[0] for r in _of_kind(search, EquilibriumKind.BOUNDARY2))
    assert xs[0] == pytest.approx(-7.0, abs=1e-6)
    assert xs[1] == pytest.approx(7.0, abs=1e-6)


def test_origin_always_found(ex2_by_p, ex1_by_p, ex3_by_p):
    for by_p in (ex2_by_p, ex1_by_p, ex3_by_p):
        for search in by_p.values():
            origins = _of_kind(search, EquilibriumKind.ORIGIN)
            assert len(origins) == 1
            assert np.linalg.norm(origins[0].location) <= 1e-6


def test_search_is_clean(ex2_by_p, ex1_by_p, ex3_by_p):
    for by_p in (ex2_by_p, ex1_by_p, ex3_by_p):
        for search in by_p.values():
            assert search.unresolved == ()
            assert search.anomalies == ()


def test_persistent_boundary_rest_point(ex1_by_p):
    for p, search in ex1_by_p.items():
        b2 = _of_kind(search, EquilibriumKind.BOUNDARY2)
        assert len(b2) == 1, f"p={p}"
        assert np.allclose(b2[0].location, [0.0, 6.0], atol=1e-4)
        assert b2[0].residual <= 1e-6


def test_interior_circle_radius(ex3_by_p):
    for p, search in ex3_by_p.items():
        interior = _of_kind(search, EquilibriumKind.INTERIOR)
        assert interior, f"p={p}"
        radius = math.sqrt(2.0 / p)
        for r in interior:
            assert np.linalg.norm(r.location) == pytest.approx(radius, abs=1e-6)


def test_upper_boundary_rest_point_with_unstable_drift(ex3_by_p):
    # exists for this weight range; the lower crossing (0,2) does not
    for search in ex3_by_p.values():
        b2 = _of_kind(search, EquilibriumKind.BOUNDARY2)
        assert any(np.allclose(r.location, [0.0, 6.0], atol=1e-4) for r in b2)
        assert not any(np.linalg.norm(r.location - np.array([0.0, 2.0])) < 0.1
                       for r in search.reports)


# --- structural invariants on every found root --------------------------------

def test_roots_satisfy_rest_point_structure(ex1, ex2, ex3, ex1_by_p, ex2_by_p, ex3_by_p):
    for sc, by_p in ((ex1, ex1_by_p), (ex2, ex2_by_p), (ex3, ex3_by_p)):
        for p, search in by_p.items():
            for rep in search.reports:
                assert rep.region.clf_active
                lie = lie_data(sc.model, sc.certs, rep.location)
                assert lie.h >= -1e-6
                sol = solve(lie, p)
                cbf_row = lie.f_h + float(lie.lg_h @ sol.u_star)
                if abs(lie.h) <= 1e-6:
                    assert abs(cbf_row) <= 1e-6
                else:
                    assert cbf_row > 1e-6
                if rep.kind is EquilibriumKind.INTERIOR:
                    g = sc.model.input_map(rep.location)
                    rate = p * sc.certs.gamma.eval(lie.v)
                    res = sc.model.drift(rep.location) - rate * (g @ lie.lg_v)
                    assert np.linalg.norm(res) <= 1e-5


def test_origin_requires_vanishing_drift():
    ident = ComparisonFunction.linear(1.0)
    model = DynamicsModel(
        n=2, m=1,
        drift=lambda x: -(x - np.array([0.5, 0.0])),
        input_map=lambda x: np.array([[0.0], [1.0]]),
    )
    certs = CertificatePair(
        clf=ScalarCertificate(lambda x: 0.5 * float(x @ x), lambda x: x.copy()),
        gamma=ident,
        cbf=ScalarCertificate(lambda x: 1.0, lambda x: np.zeros(2)),
        alpha=ComparisonFunction.linear(1.0, kind="extended-class-K"),
    )
    sc = Scenario("shifted", model, certs, None, (1.0,), (), ((-2.0, 2.0), (-2.0, 2.0)))
    search = find_equilibria(sc, 1.0, SearchGrid(sc.box, resolution=41))
    assert not _of_kind(search, EquilibriumKind.ORIGIN)
    assert search.reports  # the shifted rest point is still there


def test_closed_loop_residual_vanishes_at_known_roots(ex1):
    assert np.linalg.norm(closed_loop_residual(ex1, 1.0, [0.0, 0.0])) == 0.0
    assert np.linalg.norm(closed_loop_residual(ex1, 1.0, [0.0, 6.0])) <= 1e-12
    assert np.linalg.norm(closed_loop_residual(ex1, 1.0, [3.0, 0.0])) > 0.1


# --- interior certificate ------------------------------------------------------

def test_certificate_threshold(ex2):
    assert interior_certificate(ex2, 0.1, GRID).holds
    assert interior_certificate(ex2, 0.15, GRID).holds
    low = interior_certificate(ex2, 0.16, GRID)
    assert not low.holds
    assert low.witnesses
    for w in low.witnesses:
        assert abs(abs(w[0]) - 6.8313) <= 1e-2
    assert not interior_certificate(ex2, 1.0, GRID).holds


# --- vanishing-direction boundary roots ----------------------------------------

def test_boundary_roots_with_no_barrier_authority():
    ident = ComparisonFunction.linear(1.0)
    model = DynamicsModel(
        n=2, m=1,
        drift=lambda x: np.array([-x[1] + 0.5 * (1.0 - x[0] ** 2 - x[1] ** 2) * x[0], -x[1]]),
        input_map=lambda x: np.array([[0.0], [1.0]]),
    )
    certs = CertificatePair(
        clf=ScalarCertificate(lambda x: 0.5 * float(x @ x), lambda x: x.copy()),
        gamma=ident,
        cbf=ScalarCertificate(lambda x: 1.0 - float(x @ x), lambda x: -2.0 * x),
        alpha=ComparisonFunction.linear(1.0, kind="extended-class-K"),
    )
    sc = Scenario("rim", model, certs, None, (1.0,), (), ((-2.0, 2.0), (-2.0, 2.0)))
    search = find_equilibria(sc, 1.0, SearchGrid(sc.box, resolution=81))
    rim = _of_kind(search, EquilibriumKind.BOUNDARY1)
    assert len(rim) == 2
    xs = sorted(r.location[0] for r in rim)
    assert xs[0] == pytest.approx(-1.0, abs=1e-6)
    assert xs[1] == pytest.approx(1.0, abs=1e-6)
    assert search.anomalies == ()


# --- persistence check ----------------------------------------------------------

def test_boundary_persistence(ex1, ex3):
    assert boundary_persistence_check(ex1, [0.0, 6.0]) is True
    # same geometry, outward drift: the rest point needs a large enough weight
    assert boundary_persistence_check(ex3, [0.0, 6.0]) is False


def test_persistence_preconditions(ex1):
    with pytest.raises(ConfigurationError):
        boundary_persistence_check(ex1, [1.0, 0.0])  # not on the boundary

    flat = ComparisonFunction.linear(1.0)
    model = DynamicsModel(n=2, m=1, drift=lambda x: -x, input_map=lambda x: np.array([[0.0], [1.0]]))
    cubed = ScalarCertificate(
        value=lambda x: (1.0 - float(x @ x)) ** 3,
        gradient=lambda x: -6.0 * (1.0 - float(x @ x)) ** 2 * x,
    )
    certs = CertificatePair(
        clf=ScalarCertificate(lambda x: 0.5 * float(x @ x), lambda x: x.copy()),
        gamma=flat, cbf=cubed,
        alpha=ComparisonFunction.linear(1.0, kind="extended-class-K"),
    )
    sc = Scenario("degenerate", model, certs, None, (1.0,), (), ((-2.0, 2.0), (-2.0, 2.0)))
    with pytest.raises(IndeterminateError):
        boundary_persistence_check(sc, [1.0, 0.0])  # h = 0 with a vanishing gradient


# --- drift-to-authority ratio and the confinement bound -------------------------

def test_sup_ratio_constant_fields(ex1, ex3):
    up = sup_ratio_estimate(ex3, budget=2000, seed=1)
    assert up.value == pytest.approx(1.0, abs=1e-12)
    assert up.used == 2000 and up.skipped == 0
    down = sup_ratio_estimate(ex1, budget=2000, seed=1)
    assert down.value == pytest.approx(-1.0, abs=1e-12)


def test_sup_ratio_needs_input_authority():
    ident = ComparisonFunction.linear(1.0)
    model = DynamicsModel(n=2, m=1, drift=lambda x: -x, input_map=lambda x: np.zeros((2, 1)))
    certs = CertificatePair(
        clf=ScalarCertificate(lambda x: 0.5 * float(x @ x), lambda x: x.copy()),
        gamma=ident,
        cbf=ScalarCertificate(lambda x: 1.0, lambda x: np.zeros(2)),
        alpha=ComparisonFunction.linear(1.0, kind="extended-class-K"),
    )
    sc = Scenario("uncontrolled", model, certs, None, (1.0,), (), ((-1.0, 1.0), (-1.0, 1.0)))
    with pytest.raises(EstimateUnavailableError):
        sup_ratio_estimate(sc, budget=100, seed=0)


def test_confinement_bound_matches_circle(ex3):
    for p in (1.0, 10.0, 100.0):
        assert confinement_bound(1.0, ex3.gamma1_inverse, p) == pytest.approx(math.sqrt(2.0 / p))


def test_confinement_bound_unavailable(ex3):
    with pytest.raises(BoundUnavailableError):
        confinement_bound(float("inf"), ex3.gamma1_inverse, 1.0)
    with pytest.raises(ConfigurationError):
        confinement_bound(-1.0, ex3.gamma1_inverse, 1.0)
    with pytest.raises(ConfigurationError):
        confinement_bound(1.0, None, 1.0)


# --- search grid validation ------------------------------------------------------

def test_search_grid_validation():
    with pytest.raises(ConfigurationError):
        SearchGrid(((-1.0, 1.0), (-1.0, 1.0)), resolution=4)
    with pytest.raises(ConfigurationError):
        SearchGrid(((1.0, -1.0), (-1.0, 1.0)))
    per_axis = SearchGrid(((-1.0, 1.0), (-2.0, 2.0)), resolution=(9, 17))
    ax = per_axis.axes()
    assert len(ax) == 2 and len(ax[0]) == 9 and len(ax[1]) == 17
