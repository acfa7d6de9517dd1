"""Control-affine models, certificate pairs, and Lie-derivative data.

Conventions used throughout the library:

    dynamics        x' = f(x) + g(x) u,  x in R^n, u in R^m
    CLF row         LfV + LgV u + gamma(V) <= delta
    CBF row         Lfh + Lgh u + alpha(h) >= 0

``LieData`` collects every scalar the filter needs at one state, with the
shorthands f_v = LfV + gamma(V) and f_h = Lfh + alpha(h).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericDomainError

Array = np.ndarray


def as_vector(x, n: int | None = None) -> Array:
    """Coerce ``x`` to a finite float64 vector, optionally of length ``n``."""
    v = np.asarray(x, dtype=np.float64).ravel()
    if n is not None and v.size != n:
        raise ConfigurationError(f"expected a length-{n} vector, got length {v.size}")
    if not np.all(np.isfinite(v)):
        raise NumericDomainError(f"non-finite vector entries: {v!r}")
    return v


@dataclass(frozen=True)
class DynamicsModel:
    """Control-affine system given by a drift field and an input matrix field.

    ``drift(x)`` must return a length-``n`` vector and ``input_map(x)`` an
    ``(n, m)`` matrix. Returned arrays are treated as read-only.
    """

    n: int
    m: int
    drift: Callable[[Array], Array]
    input_map: Callable[[Array], Array]

    def __post_init__(self) -> None:
        if self.n < 1 or self.m < 1:
            raise ConfigurationError("state and input dimensions must be at least 1")


@dataclass(frozen=True)
class ScalarCertificate:
    """Continuously differentiable scalar field with its analytic gradient."""

    value: Callable[[Array], float]
    gradient: Callable[[Array], Array]


@dataclass(frozen=True)
class ComparisonFunction:
    """Strictly increasing scalar rate with eval(0) = 0.

    ``kind`` records whether the function is meant as class-K (CLF rate) or
    extended class-K (CBF rate); extended rates accept negative arguments.
    ``inverse``, when present, inverts eval on its range.
    """

    eval: Callable[[float], float]
    kind: str = "class-K"
    inverse: Callable[[float], float] | None = None

    @staticmethod
    def linear(k: float, kind: str = "class-K") -> "ComparisonFunction":
        if not (np.isfinite(k) and k > 0):
            raise ConfigurationError(f"linear rate needs a positive slope, got {k}")
        return ComparisonFunction(eval=lambda s: k * s, kind=kind, inverse=lambda s: s / k)


@dataclass(frozen=True)
class CertificatePair:
    """A CLF with its rate gamma and a CBF with its rate alpha."""

    clf: ScalarCertificate
    gamma: ComparisonFunction
    cbf: ScalarCertificate
    alpha: ComparisonFunction


@dataclass(frozen=True, slots=True)
class LieData:
    """All scalars the QP needs at one state.

    ``lg_v`` and ``lg_h`` are length-m row vectors; ``f_v = lf_v + gamma(v)``
    and ``f_h = lf_h + alpha(h)``.
    """

    x: Array
    v: float
    h: float
    lf_v: float
    lg_v: Array
    f_v: float
    lf_h: float
    lg_h: Array
    f_h: float


def lie_data(model: DynamicsModel, certs: CertificatePair, x) -> LieData:
    """Evaluate drift, input map, certificates, and all Lie derivatives at x.

    Raises ConfigurationError on dimension mismatches and NumericDomainError
    if any produced scalar fails to be finite.
    """
    xv = as_vector(x, model.n)
    f = np.asarray(model.drift(xv), dtype=np.float64)
    g = np.asarray(model.input_map(xv), dtype=np.float64)
    if f.shape != (model.n,):
        raise ConfigurationError(f"drift returned shape {f.shape}, expected ({model.n},)")
    if g.shape != (model.n, model.m):
        raise ConfigurationError(
            f"input map returned shape {g.shape}, expected ({model.n}, {model.m})"
        )

    v = float(certs.clf.value(xv))
    grad_v = np.asarray(certs.clf.gradient(xv), dtype=np.float64)
    h = float(certs.cbf.value(xv))
    grad_h = np.asarray(certs.cbf.gradient(xv), dtype=np.float64)
    if grad_v.shape != (model.n,) or grad_h.shape != (model.n,):
        raise ConfigurationError("certificate gradients must be length-n vectors")

    lf_v = float(grad_v @ f)
    lg_v = grad_v @ g
    lf_h = float(grad_h @ f)
    lg_h = grad_h @ g
    f_v = lf_v + float(certs.gamma.eval(v))
    f_h = lf_h + float(certs.alpha.eval(h))

    scalars = (v, h, lf_v, f_v, lf_h, f_h)
    if not all(np.isfinite(s) for s in scalars) or not (
        np.all(np.isfinite(lg_v)) and np.all(np.isfinite(lg_h))
    ):
        raise NumericDomainError(f"non-finite Lie data at x={xv!r}")

    return LieData(
        x=xv, v=v, h=h,
        lf_v=lf_v, lg_v=lg_v, f_v=f_v,
        lf_h=lf_h, lg_h=lg_h, f_h=f_h,
    )
