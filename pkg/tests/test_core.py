"""Lie-derivative bookkeeping and input validation."""

import numpy as np
import pytest

from cbflab import (
    ComparisonFunction,
    ConfigurationError,
    DynamicsModel,
    NumericDomainError,
    ScalarCertificate,
    lie_data,
    load,
)
from cbflab.core import as_vector

FD_STEP = 1e-6


def test_lie_data_anchor_values(ex1):
    d = lie_data(ex1.model, ex1.certs, [1.0, 0.0])
    assert d.v == pytest.approx(0.5)
    assert d.h == pytest.approx(13.0)
    assert d.lf_v == pytest.approx(-1.0)
    assert np.allclose(d.lg_v, [1.0, 0.0])
    assert d.f_v == pytest.approx(-0.5)
    assert d.lf_h == pytest.approx(-2.0)
    assert np.allclose(d.lg_h, [2.0, -8.0])
    assert d.f_h == pytest.approx(11.0)


def test_lie_data_at_origin(ex1):
    d = lie_data(ex1.model, ex1.certs, [0.0, 0.0])
    assert d.v == 0.0
    assert d.lf_v == 0.0
    assert d.f_v == 0.0
    assert np.allclose(d.lg_v, 0.0)
    assert d.h == pytest.approx(12.0)


def test_gradients_match_values_by_finite_difference():
    # analytic gradients must be consistent with the value callables
    rng = np.random.default_rng(3)
    for name in ("example1", "example2", "example3", "example5", "example6"):
        sc = load(name)
        for x in rng.uniform(-6.0, 6.0, size=(50, 2)):
            for cert in (sc.certs.clf, sc.certs.cbf):
                grad = np.asarray(cert.gradient(x), dtype=np.float64)
                for i in range(2):
                    e = np.zeros(2)
                    e[i] = FD_STEP
                    fd = (cert.value(x + e) - cert.value(x - e)) / (2.0 * FD_STEP)
                    assert grad[i] == pytest.approx(fd, abs=1e-5)


def test_as_vector_checks_length_and_finiteness():
    assert np.array_equal(as_vector([1, 2], 2), [1.0, 2.0])
    with pytest.raises(ConfigurationError):
        as_vector([1.0, 2.0, 3.0], 2)
    with pytest.raises(NumericDomainError):
        as_vector([np.nan, 0.0])


def test_dimension_validation():
    with pytest.raises(ConfigurationError):
        DynamicsModel(n=0, m=1, drift=lambda x: x, input_map=lambda x: x)
    with pytest.raises(ConfigurationError):
        DynamicsModel(n=2, m=0, drift=lambda x: x, input_map=lambda x: x)


def test_linear_rate_validation():
    f = ComparisonFunction.linear(2.0)
    assert f.eval(3.0) == 6.0
    assert f.inverse(6.0) == 3.0
    with pytest.raises(ConfigurationError):
        ComparisonFunction.linear(0.0)
    with pytest.raises(ConfigurationError):
        ComparisonFunction.linear(-1.0)


def test_lie_data_rejects_bad_shapes(ex1):
    bad_drift = DynamicsModel(n=2, m=2, drift=lambda x: np.zeros(3), input_map=lambda x: np.eye(2))
    with pytest.raises(ConfigurationError):
        lie_data(bad_drift, ex1.certs, [0.0, 0.0])
    bad_map = DynamicsModel(n=2, m=2, drift=lambda x: -x, input_map=lambda x: np.eye(3))
    with pytest.raises(ConfigurationError):
        lie_data(bad_map, ex1.certs, [0.0, 0.0])


def test_lie_data_rejects_non_finite_fields(ex1):
    inf_drift = DynamicsModel(
        n=2, m=2, drift=lambda x: np.array([np.inf, 0.0]), input_map=lambda x: np.eye(2)
    )
    with pytest.raises(NumericDomainError):
        lie_data(inf_drift, ex1.certs, [1.0, 1.0])


def test_bad_gradient_shape_rejected(ex1):
    certs = type(ex1.certs)(
        clf=ScalarCertificate(value=lambda x: 0.0, gradient=lambda x: np.zeros(3)),
        gamma=ex1.certs.gamma,
        cbf=ex1.certs.cbf,
        alpha=ex1.certs.alpha,
    )
    with pytest.raises(ConfigurationError):
        lie_data(ex1.model, certs, [0.0, 0.0])
