import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polardemosaic.classic import (
    DemosaicResult,
    bicubic_upscale2x,
    catmull_rom,
    demosaic_bicubic_upscale,
    demosaic_bilinear,
    demosaic_naive,
    fuse_atmf,
    fuse_weighted_average,
    interpolate_channel_bilinear,
    inverse_mse_weights,
    method_mse,
)
from polardemosaic.imagecore import MosaicedImage, PlanarImage
from polardemosaic.mosaic import mosaic_stokes


def constant_scene(h, w, s0=0.7, rho=0.5, phi=0.3):
    st_ = np.empty((h, w, 3))
    st_[..., 0] = s0
    st_[..., 1] = s0 * rho * math.cos(2 * phi)
    st_[..., 2] = s0 * rho * math.sin(2 * phi)
    return st_


def test_kernel_interpolates():
    assert catmull_rom(0.0) == 1.0
    np.testing.assert_allclose(catmull_rom(np.array([1.0, 2.0, -1.0, 2.5])), 0.0, atol=1e-15)
    x = np.linspace(0, 1, 11)
    total = sum(catmull_rom(x - k) for k in range(-1, 3))
    np.testing.assert_allclose(total, 1.0, atol=1e-12)


def test_bicubic_reproduces_linear_ramp_inside():
    img = np.add.outer(np.arange(8.0), 2 * np.arange(6.0))
    up = bicubic_upscale2x(img)
    y = np.arange(16) / 2 - 0.25
    x = np.arange(12) / 2 - 0.25
    expected = np.add.outer(y, 2 * x)
    np.testing.assert_allclose(up[4:-4, 4:-4], expected[4:-4, 4:-4], atol=1e-12)


def test_bilinear_lattice_passthrough_and_midpoints():
    rng = np.random.default_rng(0)
    raw = rng.uniform(0, 1, (8, 8))
    full = interpolate_channel_bilinear(raw, 1, 0)
    np.testing.assert_array_equal(full[1::2, 0::2], raw[1::2, 0::2])
    np.testing.assert_allclose(full[2, 2], 0.5 * (raw[1, 2] + raw[3, 2]))
    np.testing.assert_allclose(full[3, 1], 0.5 * (raw[3, 0] + raw[3, 2]))
    np.testing.assert_allclose(full[0, 0], raw[1, 0])


@pytest.mark.parametrize("fn", [demosaic_naive, demosaic_bilinear, demosaic_bicubic_upscale])
def test_constant_scene_exact(fn):
    m = mosaic_stokes(constant_scene(8, 10))
    res = fn(m)
    np.testing.assert_allclose(res.intensity.data, 0.7, atol=1e-12)
    np.testing.assert_allclose(res.aolp.data, 0.3, atol=1e-12)


def test_output_sizes():
    m = mosaic_stokes(constant_scene(8, 12))
    assert demosaic_naive(m).intensity.shape == (4, 6, 1)
    assert demosaic_bilinear(m).intensity.shape == (8, 12, 1)
    assert demosaic_bicubic_upscale(m).aolp.shape == (8, 12, 1)


def _result(stokes):
    return DemosaicResult.from_stokes(stokes)


def test_atmf_drops_extremes():
    vals = [1.0, 5.0, 2.0, 3.0]
    res = [_result(np.full((2, 2, 3), v)) for v in vals]
    np.testing.assert_allclose(fuse_atmf(res).stokes.data, 2.5)
    with pytest.raises(ValueError):
        fuse_atmf(res[:2])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1e-3, 10.0), min_size=2, max_size=5))
def test_inverse_mse_weights_normalized(mse):
    w = inverse_mse_weights(np.array(mse))
    assert w.sum() == pytest.approx(1.0)
    assert np.all(np.diff(w[np.argsort(mse), 0]) <= 1e-12)


def test_zero_mse_takes_all_weight():
    w = inverse_mse_weights(np.array([[0.0, 1.0], [2.0, 1.0]]))
    np.testing.assert_allclose(w, [[1.0, 0.5], [0.0, 0.5]])


def test_weighted_average_prefers_exact_method():
    gt = np.random.default_rng(1).uniform(0.1, 1, (4, 4, 3))
    good, bad = _result(gt), _result(gt + 0.3)
    weights = inverse_mse_weights(method_mse([([good, bad], gt)]))
    np.testing.assert_allclose(weights[0], 1.0)
    fused = fuse_weighted_average([good, bad], training_pairs=[([good, bad], gt)])
    np.testing.assert_allclose(fused.stokes.data, gt)
    with pytest.raises(ValueError):
        fuse_weighted_average([good, bad])


def test_mosaiced_input_types():
    with pytest.raises(ValueError):
        MosaicedImage(PlanarImage(np.zeros((2, 3))))
