"""Modified filter: fold a stabilizing nominal controller into the drift.

Given a nominal controller u_nom that already satisfies the CLF condition,
the plant is rewritten as

    x' = f'(x) + g(x) u',   f' = f + g u_nom,

the same QP is solved for the virtual input u', and the applied input is
u = u_nom + u'. Along trajectories of the rewritten system the CLF row is
satisfied with zero slack, which removes every spurious interior equilibrium
and every vanishing-row boundary equilibrium of the original filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

from .core import Array, CertificatePair, DynamicsModel, as_vector, lie_data
from .errors import (
    ConfigurationError,
    EstimateUnavailableError,
    NominalRejectedError,
)
from .qp import _check_weight, in_clf_on_cbf_on2, solve

# ||LgV|| at or below this uses the zero branch of the universal formula.
LGV_ZERO_NORM = 1e-9


@dataclass(frozen=True)
class NominalController:
    """State-feedback law with a record of where it came from."""

    eval: Callable[[Array], Array]
    provenance: str = "user-supplied"


@dataclass(frozen=True)
class TransformedModel:
    """Original model with the nominal controller folded into the drift.

    Quacks like a DynamicsModel so the rest of the library can reuse it.
    """

    base: DynamicsModel
    nominal: NominalController

    @property
    def n(self) -> int:
        return self.base.n

    @property
    def m(self) -> int:
        return self.base.m

    def drift(self, x: Array) -> Array:
        return self.base.drift(x) + self.base.input_map(x) @ self.nominal.eval(x)

    def input_map(self, x: Array) -> Array:
        return self.base.input_map(x)


@dataclass(frozen=True)
class LipschitzReport:
    """Sampled evidence for the two local-Lipschitz preconditions.

    condition_i: the CBF row direction never vanishes (min ||Lgh|| over the
    sample, held against a 1e-3 floor). condition_ii: the set
    {F_h = 0, Lgh = 0} is empty (local minimization of F_h^2 + ||Lgh||^2 from
    the most suspicious samples found no joint zero). Either condition is
    enough for the modified closed loop to be locally Lipschitz.
    """

    condition_i: bool
    min_lgh_norm: float
    condition_ii: bool
    witnesses: tuple[Array, ...]
    samples: int


@dataclass(frozen=True)
class RoaEstimate:
    """Largest sampled sub-level set of V that misses the both-active region."""

    eta: float
    sampled_radius: float
    sample_count: int


def sontag_nominal(
    model: DynamicsModel,
    certs: CertificatePair,
    *,
    box: tuple[tuple[float, float], ...],
    samples: int = 10_000,
    seed: int = 0,
    tol: float = 1e-8,
) -> NominalController:
    """Universal-formula controller, verified against the CLF condition.

    u(x) = -[(LfV + sqrt(LfV^2 + ||LgV||^4)) / ||LgV||^2] LgV^T when
    ||LgV|| > 1e-9, and 0 otherwise. The candidate is accepted only if
    LfV + LgV u + gamma(V) <= tol on a uniform sample of the box.
    """
    grad_v = certs.clf.gradient
    gamma = certs.gamma.eval
    value_v = certs.clf.value
    drift, gmap, m = model.drift, model.input_map, model.m

    def law(x: Array) -> Array:
        gv = grad_v(x)
        lg_v = gv @ gmap(x)
        q = float(lg_v @ lg_v)
        if math.sqrt(q) <= LGV_ZERO_NORM:
            return np.zeros(m)
        lf_v = float(gv @ drift(x))
        return (-(lf_v + math.sqrt(lf_v * lf_v + q * q)) / q) * lg_v

    candidate = NominalController(eval=law, provenance="sontag")
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(samples, model.n))
    for row in pts:
        x = np.asarray(row)
        gv = grad_v(x)
        margin = float(gv @ drift(x)) + float((gv @ gmap(x)) @ law(x)) + gamma(value_v(x))
        if margin > tol:
            raise NominalRejectedError(
                f"universal formula violates the CLF condition at x={x!r}: "
                f"margin {margin:.3e} > {tol:.1e}"
            )
    return candidate


def transform(model: DynamicsModel, nominal: NominalController) -> TransformedModel:
    """Fold the nominal controller into the drift."""
    probe = nominal.eval(np.zeros(model.n))
    u0 = np.asarray(probe, dtype=np.float64).ravel()
    if u0.size != model.m:
        raise ConfigurationError(
            f"nominal controller returns {u0.size} inputs, model expects {model.m}"
        )
    return TransformedModel(base=model, nominal=nominal)


def filtered_control(
    tmodel: TransformedModel, certs: CertificatePair, p: float, x
) -> Array:
    """Applied input of the modified filter: u_nom(x) + u'(x)."""
    p = _check_weight(p)
    xv = as_vector(x, tmodel.n)
    sol = solve(lie_data(tmodel, certs, xv), p)
    return tmodel.nominal.eval(xv) + sol.u_star


def lipschitz_precondition(
    tmodel: TransformedModel,
    certs: CertificatePair,
    *,
    box: tuple[tuple[float, float], ...],
    samples: int = 10_000,
    seed: int = 0,
    refine_seeds: int = 20,
) -> LipschitzReport:
    """Sampled check of the two sufficient local-Lipschitz conditions."""
    if samples < 10_000:
        raise ConfigurationError("the precondition check needs a sample of at least 10^4")
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(samples, tmodel.n))

    def row_terms(x: Array) -> tuple[float, float]:
        lie = lie_data(tmodel, certs, x)
        return lie.f_h, float(lie.lg_h @ lie.lg_h)

    scores = np.empty(samples)
    min_lgh_sq = math.inf
    for i in range(samples):
        f_h, lgh_sq = row_terms(pts[i])
        min_lgh_sq = min(min_lgh_sq, lgh_sq)
        scores[i] = f_h * f_h + lgh_sq
    min_lgh = math.sqrt(min_lgh_sq)
    condition_i = min_lgh >= 1e-3

    def score(x: Array) -> float:
        f_h, lgh_sq = row_terms(np.asarray(x, dtype=np.float64))
        return f_h * f_h + lgh_sq

    witnesses: list[Array] = []
    order = np.argsort(scores)[:refine_seeds]
    bounds = list(zip(lo, hi))
    for idx in order:
        res = optimize.minimize(score, pts[idx], method="L-BFGS-B", bounds=bounds)
        xm = np.asarray(res.x, dtype=np.float64)
        f_h, lgh_sq = row_terms(xm)
        if abs(f_h) <= 1e-6 and math.sqrt(lgh_sq) <= 1e-6:
            witnesses.append(xm)
    condition_ii = not witnesses

    return LipschitzReport(
        condition_i=condition_i,
        min_lgh_norm=min_lgh,
        condition_ii=condition_ii,
        witnesses=tuple(witnesses),
        samples=samples,
    )


def _level_has_hit(
    tmodel: TransformedModel,
    certs: CertificatePair,
    p: float,
    level: float,
    lo: Array,
    hi: Array,
    seed_pair: tuple[int, int],
    min_accept: int,
    max_draws: int,
) -> tuple[bool, int, float]:
    """Rejection-sample {V <= level} and scan for the both-active region.

    Returns (hit, accepted_count, max_norm_accepted); stops at the first hit.
    """
    rng = np.random.default_rng(seed_pair)
    value_v = certs.clf.value
    accepted = 0
    drawn = 0
    max_norm = 0.0
    batch = 4096
    while accepted < min_accept and drawn < max_draws:
        pts = rng.uniform(lo, hi, size=(batch, lo.size))
        drawn += batch
        for row in pts:
            if value_v(row) > level:
                continue
            accepted += 1
            nrm = float(np.sqrt(row @ row))
            if nrm > max_norm:
                max_norm = nrm
            if in_clf_on_cbf_on2(lie_data(tmodel, certs, row), p):
                return True, accepted, max_norm
            if accepted >= min_accept:
                break
    if accepted < min_accept:
        raise EstimateUnavailableError(
            f"could not place {min_accept} samples in the level set V <= {level:.3e} "
            f"after {drawn} draws"
        )
    return False, accepted, max_norm


def estimate_roa(
    tmodel: TransformedModel,
    certs: CertificatePair,
    p: float,
    *,
    box: tuple[tuple[float, float], ...],
    min_accept: int = 10_000,
    seed: int = 0,
    rel_tol: float = 1e-3,
    max_draws: int = 4_000_000,
) -> RoaEstimate:
    """Bisect for the largest V sub-level set free of the both-active region.

    The returned eta underestimates the true supremum by at most the sampling
    resolution; the sub-level set {V <= eta} contained no sampled point of
    the both-active region.
    """
    p = _check_weight(p)
    lo = np.array([b[0] for b in box], dtype=np.float64)
    hi = np.array([b[1] for b in box], dtype=np.float64)
    if not np.all(hi > lo):
        raise ConfigurationError("degenerate search box")

    # Sampled supremum of V over the box; corners included since quadratic
    # certificates peak there.
    rng = np.random.default_rng((seed, 0xC0FFEE))
    probe = rng.uniform(lo, hi, size=(8192, lo.size))
    vmax = max(float(certs.clf.value(row)) for row in probe)
    corners = np.array(np.meshgrid(*[(l, h) for l, h in zip(lo, hi)])).T.reshape(-1, lo.size)
    vmax = max(vmax, max(float(certs.clf.value(c)) for c in corners))

    level_index = 0

    def probe_level(level: float) -> tuple[bool, int, float]:
        nonlocal level_index
        level_index += 1
        return _level_has_hit(
            tmodel, certs, p, level, lo, hi, (seed, level_index), min_accept, max_draws
        )

    hit, count, max_norm = probe_level(vmax)
    if not hit:
        return RoaEstimate(eta=vmax, sampled_radius=max_norm, sample_count=count)

    # Walk down to a hit-free level, then bisect the bracket.
    low = vmax / 2.0
    hit_low, count, max_norm = probe_level(low)
    while hit_low:
        low /= 2.0
        if low < 1e-9:
            raise EstimateUnavailableError(
                "the both-active region reaches into every sampled level set"
            )
        hit_low, count, max_norm = probe_level(low)
    high = 2.0 * low

    while high - low > rel_tol * high:
        mid = 0.5 * (low + high)
        hit_mid, count_mid, max_norm_mid = probe_level(mid)
        if hit_mid:
            high = mid
        else:
            low, count, max_norm = mid, count_mid, max_norm_mid

    return RoaEstimate(eta=low, sampled_radius=max_norm, sample_count=count)
