import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coolopt.materials import (PhysicalProperties, RampParameters, MaterialFields, alpha_of, kt_of, ramp)


def test_ramp_worked_example():
    p = RampParameters(alpha_f=0.0, alpha_s=1e7, q_f=10.0)
    value, _ = alpha_of(0.5, p)
    assert value == pytest.approx(1e7 * 0.5 / 6.0, rel=1e-12)


def test_conductivity_interpolation_at_half():
    p = RampParameters(alpha_f=0.0, alpha_s=1.0, k_f=0.598, k_s=149.0, q_k=1.0)
    assert kt_of(0.5, p)[0] == pytest.approx(0.598 + 148.402 / 3.0, rel=1e-12)


def test_defaults_follow_channel_height(props):
    p = RampParameters.defaults(props, 10e-3)
    assert p.alpha_f == pytest.approx(3.0 * props.mu / 1e-4**2)
    assert p.alpha_s == pytest.approx(props.mu / (1e-9 * 1e-4))
    assert p.Ht_f == p.Ht_s == 1e-4


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        RampParameters(alpha_f=1.0, alpha_s=0.5)
    with pytest.raises(ValueError):
        PhysicalProperties(mu=0.0)


@given(st.floats(0.0, 1.0), st.floats(0.1, 50.0))
def test_ramp_stays_between_endpoints(gamma, q):
    value, slope = ramp(gamma, 2.0, 7.0, q)
    assert 2.0 - 1e-12 <= value <= 7.0 + 1e-12
    assert slope <= 0.0


@given(st.floats(0.01, 0.99), st.floats(0.1, 50.0))
def test_ramp_slope_matches_finite_difference(gamma, q):
    h = 1e-6
    fd = (ramp(gamma + h, 1.0, 5.0, q)[0] - ramp(gamma - h, 1.0, 5.0, q)[0]) / (2 * h)
    assert ramp(gamma, 1.0, 5.0, q)[1] == pytest.approx(fd, rel=1e-6)


def test_material_fields_shapes(ramp):
    gamma = np.linspace(0, 1, 8).reshape(2, 4)
    mat = MaterialFields.from_gamma(gamma, ramp)
    assert mat.alpha.shape == mat.kt.shape == mat.h.shape == (2, 4)
    assert mat.alpha[0, 0] == pytest.approx(ramp.alpha_s)
    assert mat.alpha[-1, -1] == pytest.approx(ramp.alpha_f)
