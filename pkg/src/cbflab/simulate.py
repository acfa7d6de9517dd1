"""Fixed-step closed-loop integration with safety and convergence monitoring.

Classical fourth-order Runge-Kutta with the filter re-solved at every stage
point. Fixed steps keep runs bit-for-bit reproducible; accuracy through the
controller's piecewise-smooth seams is bounded empirically by step-halving
rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Array, as_vector
from .errors import CbflabError, ConfigurationError
from .modified import transform
from .qp import RegionTag, _check_weight, _solve_terms


@dataclass(frozen=True)
class IntegratorConfig:
    step: float = 1e-3
    horizon: float = 20.0
    convergence_radius: float = 1e-3
    convergence_window: int = 100
    safety_tolerance: float = 1e-3

    def __post_init__(self) -> None:
        if not (0.0 < self.step <= self.horizon):
            raise ConfigurationError("need 0 < step <= horizon")
        if self.convergence_radius <= 0 or self.safety_tolerance <= 0:
            raise ConfigurationError("radii and tolerances must be positive")
        if self.convergence_window < 2:
            raise ConfigurationError("convergence window must span at least 2 samples")


@dataclass(frozen=True)
class TerminalFlag:
    """How a run ended: horizon, converged-to, safety-anomaly, or error."""

    kind: str
    state: Array
    note: str = ""


@dataclass(frozen=True)
class Trajectory:
    times: Array
    states: Array
    inputs: Array
    v_values: Array
    h_values: Array
    deltas: Array
    lambda1s: Array
    lambda2s: Array
    regions: tuple[RegionTag, ...]
    terminal: TerminalFlag

    def __len__(self) -> int:
        return self.times.size

    @property
    def min_h(self) -> float:
        return float(np.min(self.h_values))


def _controller(model, certs, p: float):
    """Closure evaluating the filtered closed loop at one state.

    Returns (xdot, u, delta, lambda1, lambda2, region, v, h). Kept free of
    dataclass construction: it runs four times per integration step.
    """
    drift, gmap = model.drift, model.input_map
    v_of, grad_v = certs.clf.value, certs.clf.gradient
    h_of, grad_h = certs.cbf.value, certs.cbf.gradient
    gam, alp = certs.gamma.eval, certs.alpha.eval
    m = model.m

    def evaluate(x: Array):
        f = np.asarray(drift(x), dtype=np.float64)
        g = np.asarray(gmap(x), dtype=np.float64)
        gv = np.asarray(grad_v(x), dtype=np.float64)
        gh = np.asarray(grad_h(x), dtype=np.float64)
        v = float(v_of(x))
        h = float(h_of(x))
        f_v = float(gv @ f) + float(gam(v))
        f_h = float(gh @ f) + float(alp(h))
        u, delta, l1, l2, tag = _solve_terms(f_v, gv @ g, f_h, gh @ g, p, m)
        return f + g @ u, u, delta, l1, l2, tag, v, h

    return evaluate


def integrate(scenario, mode: str, p: float, x0, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Run one closed-loop trajectory and label how it ended.

    mode 'original' filters around u = 0; 'modified' filters around the
    scenario's nominal controller (recorded inputs are the total applied
    input). The controller is evaluated at all four stage points. A sample
    with h < -10 * safety_tolerance truncates the run as a safety anomaly;
    a controller failure truncates it with an error note. Runs that reach
    the horizon are labelled converged-to (the windowed mean) when the
    final window of states stays within the convergence radius of it.
    """
    cfg = cfg or IntegratorConfig()
    p = _check_weight(p)
    if mode == "original":
        model, nominal = scenario.model, None
    elif mode == "modified":
        if scenario.nominal is None:
            raise ConfigurationError(f"scenario {scenario.name!r} has no nominal controller")
        model = transform(scenario.model, scenario.nominal)
        nominal = scenario.nominal.eval
    else:
        raise ConfigurationError(f"unknown controller mode: {mode!r}")

    n, m = scenario.model.n, scenario.model.m
    x = as_vector(x0, n)
    evaluate = _controller(model, scenario.certs, p)

    dt = cfg.step
    steps = max(1, int(round(cfg.horizon / dt)))
    times = np.arange(steps + 1) * dt
    states = np.empty((steps + 1, n))
    inputs = np.empty((steps + 1, m))
    diag = np.empty((steps + 1, 5))  # v, h, delta, lambda1, lambda2
    regions: list[RegionTag] = []

    flag_kind = "horizon"
    note = ""
    count = 0
    for i in range(steps + 1):
        try:
            k1, u, delta, l1, l2, tag, v, h = evaluate(x)
        except CbflabError as exc:
            flag_kind, note = "error", f"controller failed at t={times[i]:.6g}: {exc}"
            break
        states[i] = x
        if nominal is not None:
            u = np.asarray(nominal(x), dtype=np.float64).reshape(m) + u
        inputs[i] = u
        diag[i] = (v, h, delta, l1, l2)
        regions.append(tag)
        count = i + 1
        if h < -10.0 * cfg.safety_tolerance:
            flag_kind = "safety-anomaly"
            note = f"h = {h:.6g} at t = {times[i]:.6g}"
            break
        if i == steps:
            break
        try:
            k2 = evaluate(x + (0.5 * dt) * k1)[0]
            k3 = evaluate(x + (0.5 * dt) * k2)[0]
            k4 = evaluate(x + dt * k3)[0]
        except CbflabError as exc:
            flag_kind, note = "error", f"controller failed within step {i}: {exc}"
            break
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            flag_kind, note = "error", f"state diverged within step {i}"
            break

    states, inputs, diag = states[:count], inputs[:count], diag[:count]
    final = states[-1] if count else as_vector(x0, n)
    terminal_state = final
    if flag_kind == "horizon":
        w = min(cfg.convergence_window, count)
        window = states[count - w:count]
        mean = window.mean(axis=0)
        if float(np.max(np.linalg.norm(window - mean, axis=1))) <= cfg.convergence_radius:
            flag_kind, terminal_state = "converged-to", mean

    return Trajectory(
        times=times[:count],
        states=states,
        inputs=inputs,
        v_values=diag[:, 0].copy(),
        h_values=diag[:, 1].copy(),
        deltas=diag[:, 2].copy(),
        lambda1s=diag[:, 3].copy(),
        lambda2s=diag[:, 4].copy(),
        regions=tuple(regions),
        terminal=TerminalFlag(kind=flag_kind, state=terminal_state, note=note),
    )


def batch(scenario, mode: str, p: float, x0_set, cfg: IntegratorConfig | None = None) -> list[Trajectory]:
    """Integrate each start independently, in the given order.

    Failures are collected, not fatal: a start that cannot even begin is
    returned as a zero-length error-flagged trajectory.
    """
    cfg = cfg or IntegratorConfig()
    out: list[Trajectory] = []
    n, m = scenario.model.n, scenario.model.m
    for x0 in x0_set:
        try:
            out.append(integrate(scenario, mode, p, x0, cfg))
        except CbflabError as exc:
            empty = np.empty((0,))
            out.append(Trajectory(
                times=empty, states=np.empty((0, n)), inputs=np.empty((0, m)),
                v_values=empty, h_values=empty, deltas=empty,
                lambda1s=empty, lambda2s=empty, regions=(),
                terminal=TerminalFlag(
                    kind="error",
                    state=np.full(n, math.nan),
                    note=f"start rejected: {exc}",
                ),
            ))
    return out
