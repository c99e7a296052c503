"""Interpolation demosaicers and pixel-level fusion baselines."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .imagecore import PFA, MosaicedImage, PlanarImage
from .mosaic import naive_demosaic
from .stokes import aolp_map, angle_vectors, stokes_map


@dataclass(frozen=True)
class DemosaicResult:
    intensity: PlanarImage
    aolp: PlanarImage
    stokes: PlanarImage | None = None

    @classmethod
    def from_stokes(cls, stokes: np.ndarray) -> "DemosaicResult":
        return cls(PlanarImage(stokes[..., 0]), PlanarImage(aolp_map(stokes[..., 1], stokes[..., 2])), PlanarImage(stokes))


def catmull_rom(t, a: float = -0.5):
    """Keys cubic convolution kernel."""
    t = np.abs(np.asarray(t, dtype=float))
    w = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    w[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    w[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return w


def _upsample_matrix(n_in: int, a: float = -0.5) -> np.ndarray:
    """(2n, n) matrix for 2x cubic upsampling with pixel-center alignment and clamped edges."""
    n_out = 2 * n_in
    x = np.arange(n_out) / 2.0 - 0.25
    base = np.floor(x).astype(int)
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for k in range(-1, 3):
        idx = base + k
        np.add.at(m, (rows, np.clip(idx, 0, n_in - 1)), catmull_rom(x - idx, a))
    return m


def bicubic_upscale2x(img: np.ndarray) -> np.ndarray:
    """2x Catmull-Rom upscale of an (h, w[, c]) array."""
    ar = _upsample_matrix(img.shape[0])
    ac = _upsample_matrix(img.shape[1])
    if img.ndim == 2:
        return ar @ img @ ac.T
    rows = np.tensordot(ar, img, axes=(1, 0))  # (2h, w, c)
    return np.einsum("ikc,lk->ilc", rows, ac)


def demosaic_naive(m: MosaicedImage) -> DemosaicResult:
    return DemosaicResult.from_stokes(naive_demosaic(m).data)


def demosaic_bicubic_upscale(m: MosaicedImage) -> DemosaicResult:
    quarter = naive_demosaic(m).data
    return DemosaicResult.from_stokes(bicubic_upscale2x(quarter))


def _lattice_interp_1d(n: int, offset: int):
    """Indices and weights to linearly interpolate a 2-periodic lattice starting at ``offset``."""
    n_lat = (n - offset + 1) // 2
    pos = (np.arange(n) - offset) / 2.0
    k0 = np.floor(pos).astype(int)
    t = pos - k0
    lo = np.clip(k0, 0, n_lat - 1)
    hi = np.clip(k0 + 1, 0, n_lat - 1)
    return lo, hi, t


def interpolate_channel_bilinear(raw: np.ndarray, row_off: int, col_off: int) -> np.ndarray:
    """Fill one filter plane to full resolution from its 2-offset lattice, replicating edges."""
    lattice = raw[row_off::2, col_off::2]
    h, w = raw.shape
    rlo, rhi, rt = _lattice_interp_1d(h, row_off)
    clo, chi, ct = _lattice_interp_1d(w, col_off)
    rows = lattice[rlo] * (1 - rt)[:, None] + lattice[rhi] * rt[:, None]
    return rows[:, clo] * (1 - ct)[None, :] + rows[:, chi] * ct[None, :]


def demosaic_bilinear(m: MosaicedImage) -> DemosaicResult:
    raw = m.raw.astype(np.float64)
    full = {a: interpolate_channel_bilinear(raw, *PFA.offset_of(a)) for a in (0, 45, 90, 135)}
    return DemosaicResult.from_stokes(stokes_map(full[0], full[45], full[90], full[135]))


def _stack_stokes(results: Sequence[DemosaicResult]) -> np.ndarray:
    if any(r.stokes is None for r in results):
        raise ValueError("fusion needs Stokes outputs from every method")
    shapes = {r.stokes.shape for r in results}
    if len(shapes) != 1:
        raise ValueError(f"fusion inputs differ in shape: {shapes}")
    return np.stack([r.stokes.data for r in results])


def fuse_atmf(results: Sequence[DemosaicResult]) -> DemosaicResult:
    """Alpha-trimmed mean: drop one minimum and one maximum per pixel and channel."""
    if len(results) < 3:
        raise ValueError("alpha-trimmed fusion needs at least 3 inputs")
    stack = np.sort(_stack_stokes(results), axis=0)
    return DemosaicResult.from_stokes(stack[1:-1].mean(axis=0))


def inverse_mse_weights(mse: np.ndarray) -> np.ndarray:
    """Normalize per-method errors (methods, channels) into weights proportional to 1/MSE.

    A method with zero error takes the whole weight of its channel.
    """
    mse = np.asarray(mse, dtype=float)
    if mse.ndim == 1:
        mse = mse[:, None]
    w = np.empty_like(mse)
    for c in range(mse.shape[1]):
        col = mse[:, c]
        exact = col == 0
        if exact.any():
            w[:, c] = exact / exact.sum()
        else:
            w[:, c] = (1 / col) / (1 / col).sum()
    return w


def method_mse(training_pairs) -> np.ndarray:
    """Per-method, per-Stokes-channel MSE over ``(results, gt_stokes)`` pairs."""
    sq = None
    count = 0
    for results, gt in training_pairs:
        gt = gt.data if isinstance(gt, PlanarImage) else np.asarray(gt)
        err = ((_stack_stokes(results) - gt[None]) ** 2).sum(axis=(1, 2))
        sq = err if sq is None else sq + err
        count += gt.shape[0] * gt.shape[1]
    if sq is None:
        raise ValueError("no training pairs")
    return sq / count


def fuse_weighted_average(results: Sequence[DemosaicResult], training_pairs=None, weights=None) -> DemosaicResult:
    """Per-channel weighted sum, weights proportional to each method's inverse training MSE.

    Pass either ``training_pairs`` (a sequence of ``(results, gt_stokes)``) or
    precomputed ``weights`` of shape (methods, 3).
    """
    if weights is None:
        if training_pairs is None:
            raise ValueError("weighted fusion needs training pairs or weights")
        weights = inverse_mse_weights(method_mse(training_pairs))
    weights = np.broadcast_to(np.asarray(weights, dtype=float), (len(results), 3))
    stack = _stack_stokes(results)
    return DemosaicResult.from_stokes(np.einsum("mhwc,mc->hwc", stack, weights))


def direction_stokes(intensity: np.ndarray, aolp: np.ndarray) -> np.ndarray:
    """(S0, cos 2phi, sin 2phi): a Stokes-like target when the DoLP is unknown."""
    return np.concatenate([intensity[..., None], angle_vectors(aolp)], axis=-1)


def normalized_stokes(stokes: np.ndarray) -> np.ndarray:
    """Replace (S1, S2) by their unit direction, for comparison with :func:`direction_stokes`."""
    r = np.hypot(stokes[..., 1], stokes[..., 2])
    r = np.where(r > 0, r, 1.0)
    return np.stack([stokes[..., 0], stokes[..., 1] / r, stokes[..., 2] / r], axis=-1)


METHODS = {
    "naive": demosaic_naive,
    "bicubic": demosaic_bicubic_upscale,
    "bilinear": demosaic_bilinear,
}
