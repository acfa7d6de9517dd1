"""Closed-loop equilibrium search and the p-dependence diagnostics.

Equilibria of x' = f(x) + g(x) u*(x) come in three flavours: the origin,
interior points satisfying f = p gamma(V) g LgV^T inside the safe set, and
boundary points where the CBF row is active. The finder seeds a damped
Newton iteration from residual local minima on a grid, runs a separate
manifold-projected pass along h = 0, and classifies every converged root.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Array, as_vector, lie_data
from .errors import (
    BoundUnavailableError,
    CbflabError,
    ConfigurationError,
    EstimateUnavailableError,
    IndeterminateError,
)
from .qp import RegionTag, _check_weight, solve

# Residual norm at or below this counts as a converged root.
ROOT_RESIDUAL = 1e-6
# Grid cells whose residual local minimum is below this are flagged as seeds.
SEED_RESIDUAL = 1e-1
# Roots closer than this (euclidean) are merged.
DEDUP_RADIUS = 1e-4
# |h| at or below this counts as "on the boundary"; h above this as interior.
BOUNDARY_H = 1e-6
INTERIOR_H = 1e-8
# Reuse the QP's operational zero for the CBF row direction.
LGH_ZERO_NORM = 1e-7


class EquilibriumKind(enum.Enum):
    ORIGIN = "Origin"
    INTERIOR = "Interior"
    BOUNDARY1 = "Boundary1"
    BOUNDARY2 = "Boundary2"


@dataclass(frozen=True)
class SearchGrid:
    """Axis-aligned search lattice with a refinement tolerance."""

    bounds: tuple[tuple[float, float], ...]
    resolution: int | tuple[int, ...] = 81
    refine_tol: float = 1e-9

    def __post_init__(self) -> None:
        if not self.bounds or any(hi <= lo for lo, hi in self.bounds):
            raise ConfigurationError("grid bounds must be non-degenerate (lo, hi) pairs")
        for r in self.resolutions:
            if r < 8:
                raise ConfigurationError("grid resolution must be at least 8 per axis")
        if not (self.refine_tol > 0):
            raise ConfigurationError("refinement tolerance must be positive")

    @property
    def resolutions(self) -> tuple[int, ...]:
        if isinstance(self.resolution, int):
            return (self.resolution,) * len(self.bounds)
        return tuple(self.resolution)

    def axes(self) -> list[Array]:
        return [
            np.linspace(lo, hi, r)
            for (lo, hi), r in zip(self.bounds, self.resolutions)
        ]


@dataclass(frozen=True)
class EquilibriumReport:
    """One converged root of the closed-loop field."""

    location: Array
    kind: EquilibriumKind
    residual: float
    region: RegionTag
    p: float


@dataclass(frozen=True)
class EquilibriumSearch:
    """Search outcome: roots, cells the refiner gave up on, and anomalies.

    ``anomalies`` holds converged roots outside the safe set (h < -1e-6),
    which the theory forbids; they are surfaced rather than silently kept
    or dropped.
    """

    reports: tuple[EquilibriumReport, ...]
    unresolved: tuple[Array, ...] = field(default_factory=tuple)
    anomalies: tuple[EquilibriumReport, ...] = field(default_factory=tuple)


def closed_loop_residual(scenario, p: float, x) -> Array:
    """f(x) + g(x) u*(x) for the original filter closed loop."""
    p = _check_weight(p)
    xv = as_vector(x, scenario.model.n)
    lie = lie_data(scenario.model, scenario.certs, xv)
    sol = solve(lie, p)
    f = np.asarray(scenario.model.drift(xv), dtype=np.float64)
    g = np.asarray(scenario.model.input_map(xv), dtype=np.float64)
    return f + g @ sol.u_star


def _damped_newton(fn, x0: Array, tol: float, max_iter: int = 50,
                   fd_step: float = 1e-6, project=None):
    """Damped Newton with a forward-difference Jacobian.

    ``fn`` may raise on states where the filter is undefined; such trial
    points are treated as failed steps. Returns (x, residual_norm, converged).
    """
    x = np.array(x0, dtype=np.float64)
    if project is not None:
        x = project(x)
    try:
        r = fn(x)
    except CbflabError:
        return x, math.inf, False
    rn = float(np.linalg.norm(r))
    n = x.size
    for _ in range(max_iter):
        if rn <= tol:
            break
        jac = np.empty((r.size, n))
        try:
            for j in range(n):
                xp = x.copy()
                xp[j] += fd_step
                jac[:, j] = (fn(xp) - r) / fd_step
        except CbflabError:
            break
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        lam = 1.0
        improved = False
        while lam >= 2.0 ** -30:
            xt = x + lam * step
            if project is not None:
                xt = project(xt)
            try:
                rt = fn(xt)
            except CbflabError:
                lam *= 0.5
                continue
            rtn = float(np.linalg.norm(rt))
            if rtn < rn:
                x, r, rn = xt, rt, rtn
                improved = True
                break
            lam *= 0.5
        if not improved:
            break
    return x, rn, rn <= ROOT_RESIDUAL


def _minima_mask(norms: Array, offsets) -> Array:
    padded = np.full(tuple(s + 2 for s in norms.shape), np.inf)
    core = tuple(slice(1, 1 + s) for s in norms.shape)
    padded[core] = norms
    mask = np.ones_like(norms, dtype=bool)
    for offset in offsets:
        shifted = padded[tuple(slice(1 + o, 1 + o + s) for o, s in zip(offset, norms.shape))]
        mask &= norms <= shifted
    mask &= np.isfinite(norms)
    return mask


def _local_minima(norms: Array) -> list[tuple[int, ...]]:
    """Nodes that are <= all of their 3^n - 1 neighbours."""
    offsets = [
        off for off in itertools.product((-1, 0, 1), repeat=norms.ndim)
        if any(o != 0 for o in off)
    ]
    return [tuple(idx) for idx in np.argwhere(_minima_mask(norms, offsets))]


def _axis_minima(norms: Array) -> list[tuple[int, ...]]:
    """Nodes that are <= their two neighbours along at least one axis.

    A superset of _local_minima used for seeding: a root continuum passing
    diagonally next to a deeper zero (the origin) produces no full local
    minimum at nearby nodes, but still dips along single grid lines.
    """
    found = np.zeros_like(norms, dtype=bool)
    for axis in range(norms.ndim):
        offsets = []
        for sign in (-1, 1):
            off = [0] * norms.ndim
            off[axis] = sign
            offsets.append(tuple(off))
        found |= _minima_mask(norms, offsets)
    return [tuple(idx) for idx in np.argwhere(found)]


def _classify_root(scenario, p: float, x: Array, residual: float):
    lie = lie_data(scenario.model, scenario.certs, x)
    sol = solve(lie, p)
    h = lie.h
    lgh_norm = float(np.linalg.norm(lie.lg_h))
    if float(np.linalg.norm(x)) <= DEDUP_RADIUS:
        kind = EquilibriumKind.ORIGIN
    elif abs(h) <= BOUNDARY_H:
        kind = (
            EquilibriumKind.BOUNDARY1
            if lgh_norm <= LGH_ZERO_NORM
            else EquilibriumKind.BOUNDARY2
        )
    elif h > INTERIOR_H:
        kind = EquilibriumKind.INTERIOR
    else:
        kind = None  # outside the safe set: anomaly
    report = EquilibriumReport(
        location=x, kind=kind if kind is not None else EquilibriumKind.INTERIOR,
        residual=residual, region=sol.region, p=p,
    )
    return report, kind is None


def _dedup(points: list[tuple[Array, float]]) -> list[tuple[Array, float]]:
    """Merge converged roots within DEDUP_RADIUS, keeping the best residual.

    Points are sorted by location first so the merge is deterministic.
    """
    ordered = sorted(points, key=lambda pr: tuple(pr[0]))
    kept: list[tuple[Array, float]] = []
    for x, rn in ordered:
        merged = False
        for i, (xk, rk) in enumerate(kept):
            if float(np.linalg.norm(x - xk)) <= DEDUP_RADIUS:
                if rn < rk:
                    kept[i] = (x, rn)
                merged = True
                break
        if not merged:
            kept.append((x, rn))
    return kept


def _boundary_seeds(scenario, grid: SearchGrid) -> list[Array]:
    """Points near h = 0, found by bisecting sign changes along grid edges."""
    h_of = scenario.certs.cbf.value
    axes = grid.axes()
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    shape = tuple(len(a) for a in axes)
    h_vals = np.array([float(h_of(pt)) for pt in pts]).reshape(shape)

    seeds: list[Array] = []
    n = len(shape)
    for axis in range(n):
        lo_sl = tuple(slice(0, -1) if k == axis else slice(None) for k in range(n))
        hi_sl = tuple(slice(1, None) if k == axis else slice(None) for k in range(n))
        sign_change = h_vals[lo_sl] * h_vals[hi_sl] < 0.0
        for idx in np.argwhere(sign_change):
            i_lo = tuple(idx)
            i_hi = tuple(v + 1 if k == axis else v for k, v in enumerate(idx))
            a = np.array([axes[k][i] for k, i in enumerate(i_lo)])
            b = np.array([axes[k][i] for k, i in enumerate(i_hi)])
            fa = h_vals[i_lo]
            for _ in range(40):
                midpt = 0.5 * (a + b)
                fm = float(h_of(midpt))
                if fa * fm <= 0.0:
                    b = midpt
                else:
                    a, fa = midpt, fm
            seeds.append(0.5 * (a + b))
    return seeds


def find_equilibria(scenario, p: float, grid: SearchGrid) -> EquilibriumSearch:
    """Locate and classify all equilibria of the filter closed loop.

    Residual local minima below 1e-1 on the lattice seed an unconstrained
    damped Newton pass; a second pass projects onto the h = 0 manifold to
    catch boundary equilibria the lattice misses. Converged roots are merged
    within 1e-4 and classified; roots with h < -1e-6 are reported as
    anomalies, and flagged cells whose refinement failed as unresolved.
    """
    p = _check_weight(p)
    model, certs = scenario.model, scenario.certs

    def residual(x: Array) -> Array:
        lie = lie_data(model, certs, x)
        sol = solve(lie, p)
        return np.asarray(model.drift(x), dtype=np.float64) + (
            np.asarray(model.input_map(x), dtype=np.float64) @ sol.u_star
        )

    axes = grid.axes()
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    shape = tuple(len(a) for a in axes)
    norms = np.empty(pts.shape[0])
    for i, pt in enumerate(pts):
        try:
            norms[i] = float(np.linalg.norm(residual(pt)))
        except CbflabError:
            norms[i] = np.inf
    norms = norms.reshape(shape)

    seeds = [idx for idx in _axis_minima(norms) if norms[idx] < SEED_RESIDUAL]
    # Unresolved accounting uses the stricter full-neighbourhood minima.
    flagged = {
        idx for idx in _local_minima(norms) if norms[idx] < SEED_RESIDUAL
    }

    converged: list[tuple[Array, float]] = []
    unresolved: list[Array] = []
    for idx in seeds:
        seed = np.array([axes[k][i] for k, i in enumerate(idx)])
        root, rn, ok = _damped_newton(residual, seed, grid.refine_tol)
        if ok:
            converged.append((root, rn))
        elif idx in flagged:
            unresolved.append(seed)

    # Boundary pass: refine along the h = 0 manifold.
    grad_h = certs.cbf.gradient

    def project(x: Array) -> Array:
        y = np.array(x, dtype=np.float64)
        for _ in range(3):
            hv = float(certs.cbf.value(y))
            gh = np.asarray(grad_h(y), dtype=np.float64)
            gg = float(gh @ gh)
            if gg <= 1e-18:
                break
            y = y - (hv / gg) * gh
        return y

    for seed in _boundary_seeds(scenario, grid):
        root, rn, ok = _damped_newton(residual, seed, grid.refine_tol, project=project)
        if ok:
            converged.append((root, rn))

    reports: list[EquilibriumReport] = []
    anomalies: list[EquilibriumReport] = []
    for root, rn in _dedup(converged):
        report, is_anomaly = _classify_root(scenario, p, root, rn)
        (anomalies if is_anomaly else reports).append(report)

    return EquilibriumSearch(
        reports=tuple(reports),
        unresolved=tuple(unresolved),
        anomalies=tuple(anomalies),
    )


@dataclass(frozen=True)
class InteriorCertificate:
    """Outcome of the sampled interior-equilibrium elimination check."""

    holds: bool
    witnesses: tuple[Array, ...]


def interior_certificate(scenario, p: float, grid: SearchGrid) -> InteriorCertificate:
    """Check that no non-origin interior state solves f = p gamma(V) g LgV^T.

    Local minima of the condition's residual norm are refined by damped
    Newton; a refined point is a witness if it converged, sits strictly
    inside the safe set, is not the origin, and lies in the CLF-active,
    CBF-inactive region. ``holds`` is True when no witness was found.
    """
    p = _check_weight(p)
    model, certs = scenario.model, scenario.certs
    gamma = certs.gamma.eval
    grad_v = certs.clf.gradient

    def residual(x: Array) -> Array:
        f = np.asarray(model.drift(x), dtype=np.float64)
        g = np.asarray(model.input_map(x), dtype=np.float64)
        lg_v = grad_v(x) @ g
        return f - p * float(gamma(certs.clf.value(x))) * (g @ lg_v)

    axes = grid.axes()
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    shape = tuple(len(a) for a in axes)
    norms = np.array([float(np.linalg.norm(residual(pt))) for pt in pts]).reshape(shape)

    witnesses: list[tuple[Array, float]] = []
    for idx in _axis_minima(norms):
        seed = np.array([axes[k][i] for k, i in enumerate(idx)])
        root, rn, ok = _damped_newton(residual, seed, grid.refine_tol)
        if not ok:
            continue
        if float(np.linalg.norm(root)) <= DEDUP_RADIUS:
            continue
        lie = lie_data(model, certs, root)
        if lie.h <= INTERIOR_H:
            continue
        try:
            region = solve(lie, p).region
        except CbflabError:
            continue
        if region is not RegionTag.CLF_ON_CBF_OFF:
            continue
        witnesses.append((root, rn))

    merged = tuple(x for x, _ in _dedup(witnesses))
    return InteriorCertificate(holds=not merged, witnesses=merged)


def confinement_bound(v_bar: float, gamma1_inverse, p: float) -> float:
    """Radius bound gamma1^{-1}(v_bar / p) for interior equilibria."""
    p = _check_weight(p)
    v_bar = float(v_bar)
    if not math.isfinite(v_bar):
        raise BoundUnavailableError(f"ratio bound is not finite: {v_bar!r}")
    if v_bar < 0:
        raise ConfigurationError("the ratio bound must be nonnegative")
    if gamma1_inverse is None:
        raise ConfigurationError("no gamma1 inverse supplied for this scenario")
    return float(gamma1_inverse(v_bar / p))


@dataclass(frozen=True)
class SupRatioEstimate:
    """Sampled lower estimate of sup LfV / (LgV LgV^T)."""

    value: float
    used: int
    skipped: int


def sup_ratio_estimate(scenario, budget: int, seed: int = 0) -> SupRatioEstimate:
    """Sample the ratio LfV / ||LgV||^2 over the scenario box and take the max.

    States with ||LgV|| <= 1e-9 are skipped and counted. The result is a
    lower estimate of the true supremum.
    """
    if budget < 1:
        raise ConfigurationError("sampling budget must be at least 1")
    lo = np.array([b[0] for b in scenario.box])
    hi = np.array([b[1] for b in scenario.box])
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(budget, scenario.model.n))
    best = -math.inf
    used = skipped = 0
    for row in pts:
        lie = lie_data(scenario.model, scenario.certs, row)
        q = float(lie.lg_v @ lie.lg_v)
        if q <= 1e-18:
            skipped += 1
            continue
        used += 1
        best = max(best, lie.lf_v / q)
    if used == 0:
        raise EstimateUnavailableError("every sampled state had a vanishing LgV")
    return SupRatioEstimate(value=best, used=used, skipped=skipped)


def boundary_persistence_check(scenario, x_eq, probe_p: float = 1.0) -> bool:
    """Sufficient conditions for a boundary equilibrium to persist for all p.

    Checks (i) membership in the both-active boundary set at the probe p,
    (ii) gradient alignment grad V = k grad h with k > 0, and (iii)
    Lfh <= 0. All three together certify persistence for every p > 0.
    """
    probe_p = _check_weight(probe_p)
    xv = as_vector(x_eq, scenario.model.n)
    lie = lie_data(scenario.model, scenario.certs, xv)
    if abs(lie.h) > BOUNDARY_H:
        raise ConfigurationError(
            f"persistence check needs a boundary state, but h = {lie.h!r}"
        )
    grad_h = np.asarray(scenario.certs.cbf.gradient(xv), dtype=np.float64)
    nh = float(np.linalg.norm(grad_h))
    if nh <= 1e-9:
        raise IndeterminateError("vanishing safe-set gradient at the candidate")

    sol = solve(lie, probe_p)
    res = closed_loop_residual(scenario, probe_p, xv)
    cond_i = (
        float(np.linalg.norm(res)) <= ROOT_RESIDUAL
        and sol.region is RegionTag.CLF_ON_CBF_ON2
    )

    grad_v = np.asarray(scenario.certs.clf.gradient(xv), dtype=np.float64)
    nv = float(np.linalg.norm(grad_v))
    if nv <= 1e-12:
        cond_ii = False
    else:
        uv = grad_v / nv
        uh = grad_h / nh
        # Stable small-angle formula; k > 0 means the unit vectors coincide.
        angle = 2.0 * math.asin(min(1.0, 0.5 * float(np.linalg.norm(uv - uh))))
        cond_ii = angle <= 1e-6 and float(grad_v @ grad_h) > 0.0

    cond_iii = lie.lf_h <= 1e-9
    return cond_i and cond_ii and cond_iii
