"""Closed-form solution of the CLF-CBF quadratic program.

The filter solves, at one state,

    min_{u, delta}  (1/2)||u||^2 + (p/2) delta^2
    s.t.            f_v + lg_v . u - delta <= 0      (CLF row)
                    f_h + lg_h . u        >= 0       (CBF row)

whose unique solution is piecewise explicit over six regions of the state
space. Region membership is decided by the signs of f_v, f_h, and the two
multiplier numerators

    num1 = f_v (lg_h.lg_h) - f_h (lg_v.lg_h)
    num2 = f_v (lg_v.lg_h) - f_h (1/p + lg_v.lg_v)

The solver is pointwise: it makes no continuity promise across region
boundaries, although the branch values agree on the overlaps.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import Array, LieData
from .errors import ConfigurationError, InternalInconsistencyError

# Operational zero for the CBF row direction: ||lg_h|| at or below this is
# treated as the vanishing-row sub-case.
LGH_ZERO_NORM = 1e-7
# Slack used to re-test region membership on measure-zero boundaries.
BOUNDARY_SLACK = 1e-10


class RegionTag(enum.Enum):
    """The six closed-form regions, named by which rows are active."""

    CLF_OFF_CBF_OFF = "ClfOff-CbfOff"
    CLF_OFF_CBF_ON1 = "ClfOff-CbfOn1"
    CLF_OFF_CBF_ON2 = "ClfOff-CbfOn2"
    CLF_ON_CBF_OFF = "ClfOn-CbfOff"
    CLF_ON_CBF_ON1 = "ClfOn-CbfOn1"
    CLF_ON_CBF_ON2 = "ClfOn-CbfOn2"

    @property
    def clf_active(self) -> bool:
        return self in (
            RegionTag.CLF_ON_CBF_OFF,
            RegionTag.CLF_ON_CBF_ON1,
            RegionTag.CLF_ON_CBF_ON2,
        )

    @property
    def cbf_active(self) -> bool:
        return self not in (RegionTag.CLF_OFF_CBF_OFF, RegionTag.CLF_ON_CBF_OFF)


# Tie-break order on boundaries (first match wins).
PRECEDENCE = (
    RegionTag.CLF_OFF_CBF_OFF,
    RegionTag.CLF_OFF_CBF_ON1,
    RegionTag.CLF_OFF_CBF_ON2,
    RegionTag.CLF_ON_CBF_OFF,
    RegionTag.CLF_ON_CBF_ON1,
    RegionTag.CLF_ON_CBF_ON2,
)


@dataclass(frozen=True)
class QPSolution:
    """Optimal input, slack, multipliers, and the region that produced them."""

    u_star: Array
    delta: float
    lambda1: float
    lambda2: float
    region: RegionTag
    lie: LieData


def _check_weight(p: float) -> float:
    p = float(p)
    if not (math.isfinite(p) and p > 0):
        raise ConfigurationError(f"slack weight p must be positive and finite, got {p}")
    return p


def _memberships(
    f_v: float, f_h: float, a: float, b: float, c: float, p: float, slack: float
) -> dict[RegionTag, bool]:
    """Region membership tests, each relaxed outward by ``slack``.

    a = lg_v.lg_v, b = lg_v.lg_h, c = lg_h.lg_h.
    """
    num1 = f_v * c - f_h * b
    num2 = f_v * b - f_h * (1.0 / p + a)
    lgh_zero = c <= LGH_ZERO_NORM * LGH_ZERO_NORM
    return {
        RegionTag.CLF_OFF_CBF_OFF: f_v < slack and f_h > -slack,
        RegionTag.CLF_OFF_CBF_ON1: f_v < slack and abs(f_h) <= slack and lgh_zero,
        RegionTag.CLF_OFF_CBF_ON2: f_h <= slack and num1 < slack,
        RegionTag.CLF_ON_CBF_OFF: f_v >= -slack and num2 < slack,
        RegionTag.CLF_ON_CBF_ON1: f_v >= -slack and abs(f_h) <= slack and lgh_zero,
        RegionTag.CLF_ON_CBF_ON2: num1 >= -slack and num2 >= -slack and not lgh_zero,
    }


def _classify_terms(f_v: float, f_h: float, a: float, b: float, c: float, p: float) -> RegionTag:
    exact = _memberships(f_v, f_h, a, b, c, p, slack=0.0)
    matches = [tag for tag in PRECEDENCE if exact[tag]]
    if len(matches) == 1:
        return matches[0]
    if len(matches) > 1:
        return matches[0]
    relaxed = _memberships(f_v, f_h, a, b, c, p, slack=BOUNDARY_SLACK)
    for tag in PRECEDENCE:
        if relaxed[tag]:
            return tag
    raise InternalInconsistencyError(
        "no region matched (regions cover the state space; this is a bug or an "
        f"invalid certificate pair): f_v={f_v!r}, f_h={f_h!r}, "
        f"lg_v.lg_v={a!r}, lg_v.lg_h={b!r}, lg_h.lg_h={c!r}, p={p!r}"
    )


def classify_region(lie: LieData, p: float) -> RegionTag:
    """Return the region whose defining inequalities hold at this state.

    Exact membership is tested first; ties and floating-point gaps on the
    measure-zero boundaries are resolved by re-testing with slack 1e-10 and
    taking the first match in the fixed precedence order.
    """
    p = _check_weight(p)
    a = float(lie.lg_v @ lie.lg_v)
    b = float(lie.lg_v @ lie.lg_h)
    c = float(lie.lg_h @ lie.lg_h)
    return _classify_terms(lie.f_v, lie.f_h, a, b, c, p)


def _solve_terms(
    f_v: float, lg_v: Array, f_h: float, lg_h: Array, p: float, m: int
) -> tuple[Array, float, float, float, RegionTag]:
    """Shared closed-form core: returns (u, delta, lambda1, lambda2, region).

    Every branch reports delta = lambda1 / p, which the stationarity condition
    p delta = lambda1 makes exact.
    """
    a = float(lg_v @ lg_v)
    b = float(lg_v @ lg_h)
    c = float(lg_h @ lg_h)
    region = _classify_terms(f_v, f_h, a, b, c, p)

    if region in (RegionTag.CLF_OFF_CBF_OFF, RegionTag.CLF_OFF_CBF_ON1):
        return np.zeros(m), 0.0, 0.0, 0.0, region

    if region is RegionTag.CLF_OFF_CBF_ON2:
        if c <= 0.0:
            raise InternalInconsistencyError(
                "vanishing CBF row classified as the generic sub-case"
            )
        lam2 = -f_h / c
        return lam2 * lg_h, 0.0, 0.0, lam2, region

    if region in (RegionTag.CLF_ON_CBF_OFF, RegionTag.CLF_ON_CBF_ON1):
        lam1 = f_v / (1.0 / p + a)
        return -lam1 * lg_v, lam1 / p, lam1, 0.0, region

    # ClfOn-CbfOn2: both rows active with a genuine CBF direction.
    det = (1.0 / p + a) * c - b * b
    if abs(det) < 1e-14 and c > LGH_ZERO_NORM * LGH_ZERO_NORM:
        raise InternalInconsistencyError(
            f"singular multiplier system with a non-vanishing CBF row (det={det!r})"
        )
    lam1 = (f_v * c - f_h * b) / det
    lam2 = (f_v * b - f_h * (1.0 / p + a)) / det
    return -lam1 * lg_v + lam2 * lg_h, lam1 / p, lam1, lam2, region


def solve(lie: LieData, p: float) -> QPSolution:
    """Solve the filter QP at one state via the closed form."""
    p = _check_weight(p)
    u, delta, lam1, lam2, region = _solve_terms(
        lie.f_v, lie.lg_v, lie.f_h, lie.lg_h, p, lie.lg_v.shape[0]
    )
    return QPSolution(u_star=u, delta=delta, lambda1=lam1, lambda2=lam2, region=region, lie=lie)


def in_clf_on_cbf_on2(lie: LieData, p: float) -> bool:
    """Exact membership test for the both-rows-active generic region.

    Used by the region-of-attraction estimator, which needs the raw set, not
    the tie-broken classification.
    """
    p = _check_weight(p)
    a = float(lie.lg_v @ lie.lg_v)
    b = float(lie.lg_v @ lie.lg_h)
    c = float(lie.lg_h @ lie.lg_h)
    return _memberships(lie.f_v, lie.f_h, a, b, c, p, slack=0.0)[RegionTag.CLF_ON_CBF_ON2]
