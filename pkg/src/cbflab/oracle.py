"""Active-set enumeration oracle for the filter QP.

Independent cross-check of the closed form: enumerate all four activity
patterns of the two constraint rows, solve each equality-constrained
subproblem by direct linear algebra, filter by primal and dual feasibility,
and return the feasible candidate with the least objective. Nothing here
shares code with the closed-form branch formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Array, LieData
from .errors import OracleInfeasibleError
from .qp import LGH_ZERO_NORM, QPSolution, RegionTag, _check_weight

# Primal/dual feasibility slack and equality-residual acceptance.
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class ActiveSetCandidate:
    """One activity pattern's solution and its feasibility verdict."""

    clf_active: bool
    cbf_active: bool
    u: Array
    delta: float
    lambda1: float
    lambda2: float
    objective: float
    feasible: bool


def _feasible(lie: LieData, p: float, u: Array, delta: float, lam1: float, lam2: float,
              eq_residual: float) -> bool:
    clf_row = lie.f_v + float(lie.lg_v @ u) - delta
    cbf_row = lie.f_h + float(lie.lg_h @ u)
    return (
        clf_row <= FEAS_TOL
        and cbf_row >= -FEAS_TOL
        and lam1 >= -FEAS_TOL
        and lam2 >= -FEAS_TOL
        and eq_residual <= FEAS_TOL
    )


def _candidate(lie: LieData, p: float, clf_on: bool, cbf_on: bool) -> ActiveSetCandidate:
    m = lie.lg_v.shape[0]
    u = np.zeros(m)
    delta = 0.0
    lam1 = 0.0
    lam2 = 0.0
    eq_res = 0.0

    if clf_on and not cbf_on:
        # Stationarity u + lam1 lg_v^T = 0, p delta = lam1, active CLF row.
        mat = np.zeros((m + 2, m + 2))
        mat[:m, :m] = np.eye(m)
        mat[:m, m + 1] = lie.lg_v
        mat[m, m] = p
        mat[m, m + 1] = -1.0
        mat[m + 1, :m] = lie.lg_v
        mat[m + 1, m] = -1.0
        rhs = np.zeros(m + 2)
        rhs[m + 1] = -lie.f_v
        sol = np.linalg.solve(mat, rhs)
        u, delta, lam1 = sol[:m], float(sol[m]), float(sol[m + 1])

    elif cbf_on and not clf_on:
        # Stationarity u - lam2 lg_h^T = 0 with the CBF row pinned at zero;
        # delta stays 0. Least squares covers the vanishing-row case, where
        # the dead multiplier column makes the system singular and the scan
        # over {0} and the feasibility boundary keeps 0 as representative.
        mat = np.zeros((m + 1, m + 1))
        mat[:m, :m] = np.eye(m)
        mat[:m, m] = -lie.lg_h
        mat[m, :m] = lie.lg_h
        rhs = np.zeros(m + 1)
        rhs[m] = -lie.f_h
        sol, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
        u, lam2 = sol[:m], float(sol[m])
        eq_res = float(np.max(np.abs(mat @ sol - rhs)))

    elif clf_on and cbf_on:
        mat = np.zeros((m + 3, m + 3))
        mat[:m, :m] = np.eye(m)
        mat[:m, m + 1] = lie.lg_v
        mat[:m, m + 2] = -lie.lg_h
        mat[m, m] = p
        mat[m, m + 1] = -1.0
        mat[m + 1, :m] = lie.lg_v
        mat[m + 1, m] = -1.0
        mat[m + 2, :m] = lie.lg_h
        rhs = np.zeros(m + 3)
        rhs[m + 1] = -lie.f_v
        rhs[m + 2] = -lie.f_h
        sol, *_ = np.linalg.lstsq(mat, rhs, rcond=None)
        u, delta, lam1, lam2 = sol[:m], float(sol[m]), float(sol[m + 1]), float(sol[m + 2])
        eq_res = float(np.max(np.abs(mat @ sol - rhs)))

    objective = 0.5 * float(u @ u) + 0.5 * p * delta * delta
    feasible = _feasible(lie, p, u, delta, lam1, lam2, eq_res)
    return ActiveSetCandidate(
        clf_active=clf_on, cbf_active=cbf_on,
        u=u, delta=delta, lambda1=lam1, lambda2=lam2,
        objective=objective, feasible=feasible,
    )


def _tag_for(clf_on: bool, cbf_on: bool, lie: LieData) -> RegionTag:
    lgh_zero = float(lie.lg_h @ lie.lg_h) <= LGH_ZERO_NORM * LGH_ZERO_NORM
    if not cbf_on:
        return RegionTag.CLF_ON_CBF_OFF if clf_on else RegionTag.CLF_OFF_CBF_OFF
    if clf_on:
        return RegionTag.CLF_ON_CBF_ON1 if lgh_zero else RegionTag.CLF_ON_CBF_ON2
    return RegionTag.CLF_OFF_CBF_ON1 if lgh_zero else RegionTag.CLF_OFF_CBF_ON2


def enumerate_candidates(lie: LieData, p: float) -> list[ActiveSetCandidate]:
    """All four activity patterns' subproblem solutions, feasible or not."""
    p = _check_weight(p)
    return [
        _candidate(lie, p, clf_on, cbf_on)
        for clf_on, cbf_on in ((False, False), (False, True), (True, False), (True, True))
    ]


def solve_oracle(lie: LieData, p: float) -> QPSolution:
    """Solve the filter QP by exhaustive active-set enumeration."""
    p = _check_weight(p)
    feasible = [c for c in enumerate_candidates(lie, p) if c.feasible]
    if not feasible:
        raise OracleInfeasibleError(
            f"no feasible activity pattern at x={lie.x!r} (invalid CBF data?)"
        )
    best = min(feasible, key=lambda c: c.objective)
    return QPSolution(
        u_star=best.u,
        delta=best.delta,
        lambda1=best.lambda1,
        lambda2=best.lambda2,
        region=_tag_for(best.clf_active, best.cbf_active, lie),
        lie=lie,
    )


def kkt_residual(lie: LieData, sol: QPSolution, p: float) -> float:
    """Worst violation of the KKT system by a candidate solution.

    Covers stationarity in (u, delta), primal and dual feasibility, and
    complementary slackness; zero (to rounding) at the true optimum.
    Complementarity uses the min form |min(multiplier, slack)| rather than
    the product, which would multiply benign rounding in an active row's
    slack by a large multiplier and report noise instead of violation.
    """
    p = _check_weight(p)
    u, d, l1, l2 = sol.u_star, sol.delta, sol.lambda1, sol.lambda2
    r_clf = lie.f_v + float(lie.lg_v @ u) - d
    r_cbf = lie.f_h + float(lie.lg_h @ u)
    stat_u = float(np.max(np.abs(u + l1 * lie.lg_v - l2 * lie.lg_h)))
    stat_d = abs(p * d - l1)
    primal = max(r_clf, -r_cbf, 0.0)
    dual = max(-l1, -l2, 0.0)
    comp = max(abs(min(l1, -r_clf)), abs(min(l2, r_cbf)))
    return max(stat_u, stat_d, primal, dual, comp)
