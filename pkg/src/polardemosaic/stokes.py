"""Linear polarization algebra: Stokes parameters, DoLP, AoLP and angle encodings.

Angles are orientations, so they live modulo pi. The canonical interval is
the half-open [-pi/2, pi/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HALF_PI = math.pi / 2


class DomainError(ValueError):
    pass


class UndefinedAngle(ValueError):
    pass


@dataclass(frozen=True)
class StokesPixel:
    s0: float
    s1: float
    s2: float

    def scaled(self, k: float) -> "StokesPixel":
        return StokesPixel(k * self.s0, k * self.s1, k * self.s2)


@dataclass(frozen=True)
class AngleVector:
    ax: float
    ay: float


def wrap_angle(phi):
    """Fold angles into [-pi/2, pi/2)."""
    out = np.mod(np.asarray(phi, dtype=float) + HALF_PI, math.pi) - HALF_PI
    # mod can return exactly pi for tiny negative inputs
    out = np.where(out >= HALF_PI, out - math.pi, out)
    return float(out) if np.ndim(out) == 0 else out


def stokes_from_intensities(i0: float, i45: float, i90: float, i135: float) -> StokesPixel:
    if min(i0, i45, i90, i135) < 0:
        raise DomainError("filter intensities must be non-negative")
    return StokesPixel(i0 + i90, i0 - i90, i45 - i135)


def dolp(p: StokesPixel) -> float:
    """Degree of linear polarization, clamped to [0, 1].

    Returns 0 when s0 == 0; use :func:`is_degenerate` to tell that case apart.
    """
    if p.s0 <= 0:
        return 0.0
    return min(1.0, math.hypot(p.s1, p.s2) / p.s0)


def is_degenerate(p: StokesPixel) -> bool:
    return p.s0 <= 0


def aolp(s1: float, s2: float) -> float:
    if s1 == 0 and s2 == 0:
        raise UndefinedAngle("AoLP is undefined for s1 = s2 = 0")
    return wrap_angle(0.5 * math.atan2(s2, s1))


def angle_to_vector(phi: float) -> AngleVector:
    return AngleVector(math.cos(2 * phi), math.sin(2 * phi))


def vector_to_angle(v: AngleVector) -> float:
    if v.ax == 0 and v.ay == 0:
        raise UndefinedAngle("zero-norm angle vector")
    return wrap_angle(0.5 * math.atan2(v.ay, v.ax))


def wrapped_angle_error(phi_a, phi_b):
    """Distance between orientations, min over k of |a - b + k*pi|, in [0, pi/2]."""
    d = np.mod(np.asarray(phi_a, dtype=float) - np.asarray(phi_b, dtype=float), math.pi)
    out = np.minimum(d, math.pi - d)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# array forms used by the demosaicers and metrics


def stokes_map(i0, i45, i90, i135) -> np.ndarray:
    """Per-pixel (S0, S1, S2) stacked on the last axis."""
    return np.stack([i0 + i90, i0 - i90, i45 - i135], axis=-1)


def dolp_map(s0, s1, s2) -> tuple[np.ndarray, np.ndarray]:
    """DoLP image and the mask of degenerate (s0 <= 0) pixels."""
    s0 = np.asarray(s0, dtype=float)
    degenerate = s0 <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.hypot(s1, s2) / np.where(degenerate, 1.0, s0)
    rho = np.clip(np.where(degenerate, 0.0, rho), 0.0, 1.0)
    return rho, degenerate


def aolp_map(s1, s2) -> np.ndarray:
    """Vectorized AoLP; pixels with s1 = s2 = 0 come out as 0."""
    return wrap_angle(0.5 * np.arctan2(s2, s1))


def angle_vectors(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.cos(2 * phi), np.sin(2 * phi)], axis=-1)


def vectors_to_angles(v) -> np.ndarray:
    v = np.asarray(v)
    return wrap_angle(0.5 * np.arctan2(v[..., 1], v[..., 0]))
