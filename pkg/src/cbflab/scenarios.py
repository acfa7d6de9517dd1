"""Built-in benchmark scenarios and the JSON scenario document loader.

A scenario bundles a plant, a certificate pair, optional nominal controller,
and the defaults (slack weights, start states, search box) the CLI and the
analysis routines fall back on.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import (
    Array,
    CertificatePair,
    ComparisonFunction,
    DynamicsModel,
    ScalarCertificate,
)
from .errors import ScenarioError
from .modified import NominalController, TransformedModel, transform

Box = tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Scenario:
    """A plant with certificates and analysis defaults."""

    name: str
    model: DynamicsModel
    certs: CertificatePair
    nominal: NominalController | None
    p_defaults: tuple[float, ...]
    starts: tuple[Array, ...]
    box: Box
    gamma1_inverse: object | None = None  # callable s -> radius, when supported

    def transformed(self) -> "Scenario":
        """The same scenario with the nominal controller folded into f."""
        if self.nominal is None:
            raise ScenarioError(f"scenario {self.name!r} has no nominal controller")
        tmodel: TransformedModel = transform(self.model, self.nominal)
        return replace(self, name=self.name + "+nominal", model=tmodel, nominal=None)


def ring_starts(count: int, radius: float, n: int = 2) -> tuple[Array, ...]:
    """``count`` points evenly spaced on a radius-``radius`` circle."""
    if n != 2:
        raise ScenarioError("ring start sets are only defined for planar scenarios")
    angles = 2.0 * math.pi * np.arange(count) / count
    return tuple(np.array([radius * math.cos(t), radius * math.sin(t)]) for t in angles)


# ---------------------------------------------------------------------------
# Built-in plants and certificates
# ---------------------------------------------------------------------------

_I2 = np.eye(2)
_G_COL = np.array([[0.0], [1.0]])
_OBSTACLE_CENTER = np.array([0.0, 4.0])

_identity_k = ComparisonFunction.linear(1.0)
_identity_ek = ComparisonFunction.linear(1.0, kind="extended-class-K")


def _sq_v_value(x: Array) -> float:
    return 0.5 * float(x @ x)


def _sq_v_grad(x: Array) -> Array:
    return x


def _disk_h_value(x: Array) -> float:
    d = x - _OBSTACLE_CENTER
    return float(d @ d) - 4.0


def _disk_h_grad(x: Array) -> Array:
    return 2.0 * (x - _OBSTACLE_CENTER)


def _skew_v_value(x: Array) -> float:
    a = x[1] + 0.5 * x[0]
    return 0.5 * (x[0] * x[0] + a * a)


def _skew_v_grad(x: Array) -> Array:
    a = x[1] + 0.5 * x[0]
    return np.array([x[0] + 0.5 * a, a])


def _ellipse_h_value(x: Array) -> float:
    return -0.1 * x[0] * x[0] - 0.15 * x[0] * x[1] - 0.1 * x[1] * x[1] + 4.9


def _ellipse_h_grad(x: Array) -> Array:
    return np.array([-0.2 * x[0] - 0.15 * x[1], -0.15 * x[0] - 0.2 * x[1]])


_SQ_CLF = ScalarCertificate(value=_sq_v_value, gradient=_sq_v_grad)
_DISK_CBF = ScalarCertificate(value=_disk_h_value, gradient=_disk_h_grad)
_SKEW_CLF = ScalarCertificate(value=_skew_v_value, gradient=_skew_v_grad)
_ELLIPSE_CBF = ScalarCertificate(value=_ellipse_h_value, gradient=_ellipse_h_grad)

_FLAT_CBF = ScalarCertificate(value=lambda x: 1.0, gradient=lambda x: np.zeros(2))


def _sqrt2s(s: float) -> float:
    return math.sqrt(2.0 * s)


def _make_example1() -> Scenario:
    model = DynamicsModel(n=2, m=2, drift=lambda x: -x, input_map=lambda x: _I2)
    certs = CertificatePair(
        clf=_SQ_CLF, gamma=_identity_k, cbf=_DISK_CBF, alpha=_identity_ek
    )
    return Scenario(
        name="example1",
        model=model,
        certs=certs,
        nominal=None,
        p_defaults=(1.0,),
        starts=ring_starts(16, 6.0),
        box=((-8.0, 8.0), (-8.0, 8.0)),
        gamma1_inverse=_sqrt2s,
    )


def _make_example2() -> Scenario:
    model = DynamicsModel(
        n=2, m=1,
        drift=lambda x: np.array([x[1], x[0]]),
        input_map=lambda x: _G_COL,
    )
    certs = CertificatePair(
        clf=_SKEW_CLF,
        gamma=ComparisonFunction.linear(3.0 / 7.0),
        cbf=_ELLIPSE_CBF,
        alpha=_identity_ek,
    )
    return Scenario(
        name="example2",
        model=model,
        certs=certs,
        nominal=None,
        p_defaults=(0.1, 1.0, 10.0),
        starts=ring_starts(16, 5.0),
        box=((-8.0, 8.0), (-8.0, 8.0)),
    )


def _make_example3() -> Scenario:
    base = _make_example1()
    model = DynamicsModel(n=2, m=2, drift=lambda x: x.copy(), input_map=lambda x: _I2)
    return replace(
        base,
        name="example3",
        model=model,
        p_defaults=(1.0, 10.0, 100.0),
    )


def _make_example5() -> Scenario:
    base = _make_example3()
    nominal = NominalController(eval=lambda x: -2.0 * x, provenance="user-supplied")
    return replace(base, name="example5", nominal=nominal, p_defaults=(1.0,))


def _make_example6() -> Scenario:
    base = _make_example2()
    nominal = NominalController(
        eval=lambda x: np.array([-2.0 * x[0] - x[1]]), provenance="user-supplied"
    )
    return replace(base, name="example6", nominal=nominal)


def _make_example5_noobstacle() -> Scenario:
    base = _make_example5()
    certs = replace(base.certs, cbf=_FLAT_CBF)
    return replace(base, name="example5-noobstacle", certs=certs)


_REGISTRY = {
    "example1": _make_example1,
    "example2": _make_example2,
    "example3": _make_example3,
    "example5": _make_example5,
    "example6": _make_example6,
    "example5-noobstacle": _make_example5_noobstacle,
}


def registry_names() -> tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


# ---------------------------------------------------------------------------
# Scenario documents
# ---------------------------------------------------------------------------
#
# Schema (JSON object):
#   name: str, n: int, m: int
#   drift: list of n polynomials; each polynomial is a list of terms
#          {"c": coefficient, "e": [exponent per state variable]}
#   input_map: {"constant": n x m matrix} or {"polys": n x m matrix of polynomials}
#   V: {"Q": n x n matrix}            V(x) = 0.5 x^T Q x
#   gamma: {"linear": k}
#   h: {"A": n x n, "b": length n, "c": scalar}   h(x) = x^T A x + b.x + c
#   alpha: {"linear": k}
#   u_nom (optional): {"K": m x n matrix}         u_nom(x) = K x
#   p_defaults: list of positive reals
#   starts: list of length-n states
#   box: list of n [lo, hi] pairs


def _poly_eval(terms: list[dict], x: Array) -> float:
    total = 0.0
    for t in terms:
        val = float(t["c"])
        for xi, ei in zip(x, t["e"]):
            if ei:
                val *= float(xi) ** ei
        total += val
    return total


def _parse_polynomial(obj, n: int) -> list[dict]:
    if not isinstance(obj, list):
        raise ScenarioError("polynomial must be a list of terms")
    terms = []
    for t in obj:
        if not isinstance(t, dict) or "c" not in t or "e" not in t:
            raise ScenarioError(f"malformed polynomial term: {t!r}")
        exps = list(t["e"])
        if len(exps) != n or any((not isinstance(e, int)) or e < 0 for e in exps):
            raise ScenarioError(f"malformed exponent tuple: {t['e']!r}")
        terms.append({"c": float(t["c"]), "e": exps})
    return terms


def _document_scenario(doc: dict) -> Scenario:
    try:
        name = str(doc["name"])
        n = int(doc["n"])
        m = int(doc["m"])
        drift_terms = [_parse_polynomial(pi, n) for pi in doc["drift"]]
        if len(drift_terms) != n:
            raise ScenarioError(f"drift must have {n} components")

        gspec = doc["input_map"]
        if "constant" in gspec:
            g_const = np.asarray(gspec["constant"], dtype=np.float64)
            if g_const.shape != (n, m):
                raise ScenarioError(f"input_map must be {n} x {m}")
            input_map = lambda x, _g=g_const: _g
        elif "polys" in gspec:
            g_terms = [
                [_parse_polynomial(entry, n) for entry in row] for row in gspec["polys"]
            ]
            if len(g_terms) != n or any(len(row) != m for row in g_terms):
                raise ScenarioError(f"input_map must be {n} x {m}")

            def input_map(x, _t=g_terms, _n=n, _m=m):
                out = np.empty((_n, _m))
                for i in range(_n):
                    for j in range(_m):
                        out[i, j] = _poly_eval(_t[i][j], x)
                return out
        else:
            raise ScenarioError("input_map needs 'constant' or 'polys'")

        def drift(x, _t=drift_terms, _n=n):
            out = np.empty(_n)
            for i in range(_n):
                out[i] = _poly_eval(_t[i], x)
            return out

        q = np.asarray(doc["V"]["Q"], dtype=np.float64)
        if q.shape != (n, n):
            raise ScenarioError(f"V.Q must be {n} x {n}")
        q = 0.5 * (q + q.T)
        clf = ScalarCertificate(
            value=lambda x, _q=q: 0.5 * float(x @ (_q @ x)),
            gradient=lambda x, _q=q: _q @ x,
        )

        a_mat = np.asarray(doc["h"]["A"], dtype=np.float64)
        b_vec = np.asarray(doc["h"]["b"], dtype=np.float64)
        c_val = float(doc["h"]["c"])
        if a_mat.shape != (n, n) or b_vec.shape != (n,):
            raise ScenarioError("h needs an n x n A and a length-n b")
        a_sym = 0.5 * (a_mat + a_mat.T)
        cbf = ScalarCertificate(
            value=lambda x, _a=a_sym, _b=b_vec, _c=c_val: float(x @ (_a @ x) + _b @ x + _c),
            gradient=lambda x, _a=a_sym, _b=b_vec: 2.0 * (_a @ x) + _b,
        )

        gamma = ComparisonFunction.linear(float(doc["gamma"]["linear"]))
        alpha = ComparisonFunction.linear(
            float(doc["alpha"]["linear"]), kind="extended-class-K"
        )

        nominal = None
        if "u_nom" in doc and doc["u_nom"] is not None:
            k_mat = np.asarray(doc["u_nom"]["K"], dtype=np.float64)
            if k_mat.shape != (m, n):
                raise ScenarioError(f"u_nom.K must be {m} x {n}")
            nominal = NominalController(
                eval=lambda x, _k=k_mat: _k @ x, provenance="user-supplied"
            )

        p_defaults = tuple(float(p) for p in doc.get("p_defaults", [1.0]))
        if any(p <= 0 for p in p_defaults):
            raise ScenarioError("p_defaults must be positive")
        starts = tuple(
            np.asarray(s, dtype=np.float64) for s in doc.get("starts", [])
        )
        if any(s.shape != (n,) for s in starts):
            raise ScenarioError("every start must be a length-n state")
        box_raw = doc.get("box", [[-8.0, 8.0]] * n)
        box = tuple((float(lo), float(hi)) for lo, hi in box_raw)
        if len(box) != n or any(hi <= lo for lo, hi in box):
            raise ScenarioError("box must give n non-degenerate [lo, hi] pairs")
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario document: {exc}") from exc

    model = DynamicsModel(n=n, m=m, drift=drift, input_map=input_map)
    certs = CertificatePair(clf=clf, gamma=gamma, cbf=cbf, alpha=alpha)
    scenario = Scenario(
        name=name,
        model=model,
        certs=certs,
        nominal=nominal,
        p_defaults=p_defaults,
        starts=starts,
        box=box,
    )
    _sanity_check(scenario)
    return scenario


def _sanity_check(s: Scenario) -> None:
    zero = np.zeros(s.model.n)
    v0 = float(s.certs.clf.value(zero))
    h0 = float(s.certs.cbf.value(zero))
    if abs(v0) > 1e-12:
        raise ScenarioError(f"V(0) must vanish, got {v0!r}")
    if h0 <= 0.0:
        raise ScenarioError(f"h(0) must be positive (origin inside the safe set), got {h0!r}")
    for fn, label in ((s.certs.gamma, "gamma"), (s.certs.alpha, "alpha")):
        probes = np.linspace(0.0, 3.0, 7)
        vals = [fn.eval(float(t)) for t in probes]
        if abs(vals[0]) > 1e-12 or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ScenarioError(f"{label} must be strictly increasing with {label}(0) = 0")


def load(source: "str | Path | dict") -> Scenario:
    """Load a built-in scenario by name, or a document by path/dict."""
    if isinstance(source, dict):
        return _document_scenario(source)
    if isinstance(source, Path) or (
        isinstance(source, str) and source.endswith(".json")
    ):
        path = Path(source)
        if not path.exists():
            raise ScenarioError(f"scenario document not found: {path}")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ScenarioError("scenario document must be a JSON object")
        return _document_scenario(doc)
    if isinstance(source, str):
        maker = _REGISTRY.get(source)
        if maker is None:
            raise ScenarioError(
                f"unknown scenario {source!r}; built-ins: {', '.join(registry_names())}"
            )
        return maker()
    raise ScenarioError(f"cannot load a scenario from {type(source).__name__}")
