import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polardemosaic.stokes import (
    DomainError,
    StokesPixel,
    UndefinedAngle,
    angle_to_vector,
    angle_vectors,
    aolp,
    aolp_map,
    dolp,
    dolp_map,
    is_degenerate,
    stokes_from_intensities,
    vector_to_angle,
    vectors_to_angles,
    wrap_angle,
    wrapped_angle_error,
)

angles = st.floats(-10.0, 10.0, allow_nan=False)


def test_intensities_to_stokes():
    p = stokes_from_intensities(0.6, 0.5, 0.4, 0.5)
    assert (p.s0, p.s1, p.s2) == pytest.approx((1.0, 0.2, 0.0))
    with pytest.raises(DomainError):
        stokes_from_intensities(-0.1, 0, 0, 0)


def test_dolp_cases():
    assert dolp(StokesPixel(1.0, 1.0, 0.0)) == 1.0
    assert dolp(StokesPixel(1.0, 3.0, 4.0)) == 1.0
    assert dolp(StokesPixel(2.0, 0.6, 0.8)) == pytest.approx(0.5)
    zero = StokesPixel(0.0, 0.0, 0.0)
    assert dolp(zero) == 0.0 and is_degenerate(zero)


def test_aolp_cases():
    assert aolp(1.0, 0.0) == 0.0
    assert aolp(0.0, 1.0) == pytest.approx(math.pi / 4)
    assert aolp(-1.0, 0.0) == -math.pi / 2
    with pytest.raises(UndefinedAngle):
        aolp(0.0, 0.0)


@given(angles)
def test_wrap_range_and_period(phi):
    w = wrap_angle(phi)
    assert -math.pi / 2 <= w < math.pi / 2
    assert wrapped_angle_error(w, phi) < 1e-9


@given(angles, angles)
def test_wrapped_error_properties(a, b):
    e = wrapped_angle_error(a, b)
    assert 0 <= e <= math.pi / 2 + 1e-12
    assert e == pytest.approx(wrapped_angle_error(b, a), abs=1e-12)
    assert wrapped_angle_error(a + math.pi, b) == pytest.approx(e, abs=1e-9)


def test_wrapped_error_example():
    assert math.degrees(wrapped_angle_error(math.radians(89), math.radians(-89))) == pytest.approx(2.0)


@given(st.floats(-1.5, 1.5))
def test_vector_round_trip(phi):
    back = vector_to_angle(angle_to_vector(phi))
    assert wrapped_angle_error(back, phi) < 1e-9


def test_zero_vector():
    from polardemosaic.stokes import AngleVector

    with pytest.raises(UndefinedAngle):
        vector_to_angle(AngleVector(0.0, 0.0))


def test_map_forms_agree_with_scalars():
    rng = np.random.default_rng(1)
    s0 = rng.uniform(0.1, 2, 50)
    s1, s2 = rng.uniform(-1, 1, (2, 50))
    rho, deg = dolp_map(s0, s1, s2)
    phi = aolp_map(s1, s2)
    for k in range(50):
        p = StokesPixel(s0[k], s1[k], s2[k])
        assert rho[k] == pytest.approx(dolp(p))
        assert phi[k] == pytest.approx(aolp(s1[k], s2[k]))
    assert not deg.any()
    np.testing.assert_allclose(wrapped_angle_error(vectors_to_angles(angle_vectors(phi)), phi), 0, atol=1e-12)
