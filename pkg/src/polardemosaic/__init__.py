"""Demosaicing for polarization filter array cameras: classic interpolation,
a mosaic-aware convolutional network, and an LCD-based ground-truth pipeline."""

from .imagecore import PFA, DatasetManifest, MosaicedImage, PlanarImage, read_image, read_manifest
from .stokes import aolp, dolp, stokes_from_intensities, wrapped_angle_error

__version__ = "0.1.0"

__all__ = [
    "PFA",
    "DatasetManifest",
    "MosaicedImage",
    "PlanarImage",
    "aolp",
    "dolp",
    "read_image",
    "read_manifest",
    "stokes_from_intensities",
    "wrapped_angle_error",
]
