"""Forward PFA simulation, quarter-resolution demosaicing and the synthetic dataset."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imagecore import (
    PFA,
    DatasetManifest,
    ManifestEntry,
    MosaicedImage,
    PlanarImage,
    read_image,
    write_pfm,
)
from .stokes import StokesPixel, stokes_map, wrap_angle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PolarizationScene:
    intensity: PlanarImage
    aolp: PlanarImage
    dolp: PlanarImage

    def __post_init__(self):
        for name in ("intensity", "aolp", "dolp"):
            val = getattr(self, name)
            if not isinstance(val, PlanarImage):
                object.__setattr__(self, name, PlanarImage(val))
        shapes = {self.intensity.shape, self.aolp.shape, self.dolp.shape}
        if len(shapes) != 1:
            raise ValueError(f"scene rasters differ in shape: {shapes}")
        d = self.dolp.data
        if d.min() < 0 or d.max() > 1:
            raise ValueError("DoLP must lie in [0, 1]")

    def stokes(self) -> np.ndarray:
        s0 = self.intensity.data[:, :, 0].astype(np.float64)
        phi = self.aolp.data[:, :, 0].astype(np.float64)
        rho = self.dolp.data[:, :, 0].astype(np.float64)
        return np.stack([s0, s0 * rho * np.cos(2 * phi), s0 * rho * np.sin(2 * phi)], axis=-1)


@dataclass(frozen=True)
class RandomFieldConfig:
    num_harmonics: int = 8
    max_frequency: float = 4.0
    amplitude_decay: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if self.num_harmonics < 1:
            raise ValueError("num_harmonics must be >= 1")


def polarizer_intensity(p: StokesPixel, theta_deg: float) -> float:
    t = math.radians(theta_deg)
    return max(0.0, 0.5 * (p.s0 + p.s1 * math.cos(2 * t) + p.s2 * math.sin(2 * t)))


def polarizer_intensity_map(stokes: np.ndarray, theta_deg) -> np.ndarray:
    t = np.radians(theta_deg)
    v = 0.5 * (stokes[..., 0] + stokes[..., 1] * np.cos(2 * t) + stokes[..., 2] * np.sin(2 * t))
    return np.maximum(v, 0.0)


def mosaic_stokes(stokes: np.ndarray) -> MosaicedImage:
    """Sample a full-resolution (H, W, 3) Stokes raster through the PFA."""
    h, w = stokes.shape[:2]
    if h % 2 or w % 2:
        raise ValueError(f"scene dimensions must be even, got {h}x{w}")
    raw = polarizer_intensity_map(stokes, PFA.angle_grid(h, w))
    return MosaicedImage(PlanarImage(raw))


def mosaic_scene(scene: PolarizationScene) -> MosaicedImage:
    return mosaic_stokes(scene.stokes())


def split_channels(raw: np.ndarray) -> dict[int, np.ndarray]:
    """The four quarter-resolution filter planes keyed by angle in degrees."""
    out = {}
    for angle in (0, 45, 90, 135):
        r, c = PFA.offset_of(angle)
        out[angle] = raw[r::2, c::2]
    return out


def naive_demosaic(m: MosaicedImage) -> PlanarImage:
    """Per macro-pixel Stokes vector at (H/2, W/2)."""
    ch = split_channels(m.raw.astype(np.float64))
    return PlanarImage(stokes_map(ch[0], ch[45], ch[90], ch[135]))


def random_smooth_field(config: RandomFieldConfig, height: int, width: int, value_range=(0.0, 1.0)) -> np.ndarray:
    """Band-limited random Fourier field rescaled onto ``value_range``.

    Frequencies are in cycles per image. A field with no resolvable variation
    (peak-to-peak below 1e-6 of the amplitude budget) collapses to the range
    midpoint instead of being stretched.
    """
    rng = np.random.default_rng(config.seed)
    lo, hi = value_range
    y = (np.arange(height) / height)[:, None]
    x = (np.arange(width) / width)[None, :]
    field = np.zeros((height, width))
    total_amp = 0.0
    for _ in range(config.num_harmonics):
        f = rng.uniform(0.0, 1.0) * config.max_frequency
        direction = rng.uniform(0.0, 2 * math.pi)
        phase = rng.uniform(0.0, 2 * math.pi)
        amp = max(f, 0.5) ** (-config.amplitude_decay)
        fx, fy = f * math.cos(direction), f * math.sin(direction)
        field += amp * np.cos(2 * math.pi * (fx * x + fy * y) + phase)
        total_amp += amp
    ptp = field.max() - field.min()
    if ptp <= 1e-6 * total_amp:
        return np.full((height, width), 0.5 * (lo + hi))
    return np.clip(lo + (field - field.min()) * ((hi - lo) / ptp), min(lo, hi), max(lo, hi))


# ---------------------------------------------------------------------------
# synthetic dataset


@dataclass(frozen=True)
class SynthConfig:
    tile: int = 128
    field: RandomFieldConfig = RandomFieldConfig()
    dolp_range: tuple[float, float] = (0.2, 1.0)
    quantize_bits: int = 0
    train_fraction: float = 0.75
    write_dolp: bool = False


def load_intensity_sources(intensity_dir: str | Path | None, min_size: int) -> list[np.ndarray]:
    """Grayscale source images in [0, 1].

    ``None`` uses the sample photographs bundled with scikit-image.
    """
    images = []
    if intensity_dir is None:
        from skimage import data as skdata
        from skimage.color import rgb2gray
        from skimage.util import img_as_float

        for name in ("camera", "astronaut", "coffee", "chelsea", "rocket", "horse", "clock", "coins",
                     "brick", "grass", "gravel", "moon", "page", "text", "immunohistochemistry", "cat"):
            img = img_as_float(getattr(skdata, name)())
            if img.ndim == 3:
                img = rgb2gray(img[..., :3])
            images.append(np.asarray(img, dtype=np.float64))
    else:
        for p in sorted(Path(intensity_dir).iterdir()):
            if p.suffix.lower() in (".pgm", ".pfm"):
                img = read_image(p)
                images.append(np.clip(img.data.mean(axis=2), 0.0, 1.0).astype(np.float64))
    usable = [im for im in images if im.shape[0] >= min_size and im.shape[1] >= min_size]
    if not usable:
        raise ValueError(f"no source images of at least {min_size}x{min_size} in {intensity_dir}")
    return usable


def synth_sample(sources: list[np.ndarray], config: SynthConfig, seed: int):
    """One (mosaic, S0, AoLP, DoLP) sample, fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    t = config.tile
    src = sources[int(rng.integers(len(sources)))]
    r0 = int(rng.integers(src.shape[0] - t + 1))
    c0 = int(rng.integers(src.shape[1] - t + 1))
    s0 = src[r0 : r0 + t, c0 : c0 + t]
    if rng.random() < 0.5:
        s0 = s0[:, ::-1]
    fseed, dseed = (int(v) for v in rng.integers(0, 2**63 - 1, size=2))
    base = config.field
    phi = random_smooth_field(
        RandomFieldConfig(base.num_harmonics, base.max_frequency, base.amplitude_decay, fseed), t, t,
        (-math.pi / 2, math.pi / 2),
    )
    phi = wrap_angle(phi)
    rho = random_smooth_field(
        RandomFieldConfig(base.num_harmonics, base.max_frequency, base.amplitude_decay, dseed), t, t,
        config.dolp_range,
    )
    scene = PolarizationScene(PlanarImage(s0), PlanarImage(phi), PlanarImage(rho))
    raw = mosaic_scene(scene).raw
    if config.quantize_bits:
        levels = 2**config.quantize_bits - 1
        raw = np.rint(np.clip(raw, 0, 1) * levels) / levels
    return raw, s0, phi, rho


def generate_synthetic_dataset(
    intensity_dir, n_samples: int, out_dir, config: SynthConfig = SynthConfig(), seed: int = 0
) -> DatasetManifest:
    """Write ``n_samples`` PFM triples and ``manifest.jsonl`` into ``out_dir``.

    Sample ``i`` uses seed ``seed ^ i``; the train/test assignment is a seeded
    permutation with ``train_fraction`` of the samples in train.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sources = load_intensity_sources(intensity_dir, config.tile)
    n_train = int(n_samples * config.train_fraction)
    order = np.random.default_rng(seed).permutation(n_samples)
    is_train = np.zeros(n_samples, bool)
    is_train[order[:n_train]] = True
    entries = []
    for i in range(n_samples):
        raw, s0, phi, rho = synth_sample(sources, config, seed ^ i)
        names = (f"input_{i:05d}.pfm", f"intensity_{i:05d}.pfm", f"aolp_{i:05d}.pfm")
        for name, arr in zip(names, (raw, s0, phi)):
            write_pfm(PlanarImage(arr.astype(np.float32)), out_dir / name)
        dolp_name = None
        if config.write_dolp:
            dolp_name = f"dolp_{i:05d}.pfm"
            write_pfm(PlanarImage(rho.astype(np.float32)), out_dir / dolp_name)
        entries.append(ManifestEntry(*names, split="train" if is_train[i] else "test", dolp_gt_path=dolp_name))
        if (i + 1) % 256 == 0:
            log.info("synth: %d/%d samples", i + 1, n_samples)
    manifest = DatasetManifest(entries, root=out_dir)
    manifest.write(out_dir / "manifest.jsonl")
    return manifest
