"""Metrics, noise sweeps and training-set-size sweeps with CSV reports."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .classic import (
    DemosaicResult,
    demosaic_bicubic_upscale,
    demosaic_bilinear,
    demosaic_naive,
    direction_stokes,
    fuse_atmf,
    fuse_weighted_average,
    inverse_mse_weights,
    normalized_stokes,
)
from .imagecore import DatasetManifest, MosaicedImage, PlanarImage
from .stokes import wrapped_angle_error

log = logging.getLogger(__name__)

CSV_HEADER = ["method", "sigma_n", "psnr_db", "intensity_mae_e3", "angle_mae_deg", "n_images"]
METHOD_NAMES = ("naive", "bilinear", "bicubic", "atmf", "wavg", "pfadn")


class UnknownMethod(ValueError):
    pass


def _arr(x) -> np.ndarray:
    return x.data[..., 0] if isinstance(x, PlanarImage) else np.asarray(x)


def psnr(gt, pred, mask=None) -> float:
    """10 log10(1 / MSE) for images in [0, 1]; identical images give ``inf``."""
    gt, pred = _arr(gt).astype(np.float64), _arr(pred).astype(np.float64)
    if gt.shape != pred.shape:
        raise ValueError(f"shape mismatch {gt.shape} vs {pred.shape}")
    diff = gt - pred if mask is None else (gt - pred)[mask]
    if diff.size == 0:
        raise ValueError("empty mask")
    mse = float(np.mean(diff**2))
    return math.inf if mse == 0 else 10 * math.log10(1.0 / mse)


def intensity_mae_e3(gt, pred, mask=None) -> float:
    diff = np.abs(_arr(gt).astype(np.float64) - _arr(pred))
    return 1e3 * float(diff.mean() if mask is None else diff[mask].mean())


def angle_mae(gt_phi, pred_phi, mask=None) -> float:
    """Mean orientation error in degrees; errors wrap with period pi."""
    gt_phi, pred_phi = _arr(gt_phi), _arr(pred_phi)
    if gt_phi.shape != pred_phi.shape:
        raise ValueError(f"shape mismatch {gt_phi.shape} vs {pred_phi.shape}")
    err = wrapped_angle_error(gt_phi.astype(np.float64), pred_phi.astype(np.float64))
    if mask is not None:
        err = err[np.asarray(mask, bool)]
    if err.size == 0:
        raise ValueError("empty mask")
    return float(np.degrees(err.mean()))


def noise_seed(seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])


def add_noise(m: MosaicedImage, sigma_n: float, seed: int) -> MosaicedImage:
    """Zero-mean Gaussian noise on the mosaic, clamped to [0, 1]."""
    if sigma_n < 0:
        raise ValueError("sigma_n must be non-negative")
    if sigma_n == 0:
        return m
    noise = np.random.default_rng(seed).normal(0.0, sigma_n, m.raw.shape)
    return MosaicedImage(PlanarImage(np.clip(m.raw + noise, 0.0, 1.0)))


@dataclass(frozen=True)
class MetricsRow:
    method: str
    sigma_n: float
    psnr_db: float
    intensity_mae_e3: float
    angle_mae_deg: float
    n_images: int

    def csv_fields(self) -> list[str]:
        def fmt(v):
            return "inf" if v == math.inf else f"{v:.6f}"

        return [self.method, f"{self.sigma_n:g}", fmt(self.psnr_db), fmt(self.intensity_mae_e3),
                fmt(self.angle_mae_deg), str(self.n_images)]


# ---------------------------------------------------------------------------
# method registry


def _nearest2x(a: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(a, 2, axis=0), 2, axis=1)


def demosaic_naive_full(m: MosaicedImage) -> DemosaicResult:
    """Quarter-resolution Stokes replicated over each macro-pixel."""
    return DemosaicResult.from_stokes(_nearest2x(demosaic_naive(m).stokes.data))


CLASSIC = {"naive": demosaic_naive_full, "bilinear": demosaic_bilinear, "bicubic": demosaic_bicubic_upscale}
FUSION_POOL = ("naive", "bilinear", "bicubic")


@dataclass
class BenchmarkConfig:
    wavg_calibration_images: int = 32
    seed: int = 0
    jobs: int = 1
    dolp_threshold: float = 0.02  # angle metrics skip GT pixels below this DoLP, when GT DoLP is stored


def calibrate_wavg(manifest: DatasetManifest, limit: int) -> np.ndarray:
    """Inverse-MSE weights for the fusion pool from the training split.

    Channel 0 is scored on S0; channels 1-2 on the doubled-angle direction,
    because angle ground truth carries no DoLP.
    """
    entries = manifest.train[:limit] or manifest.test[:limit]
    sq = np.zeros((len(FUSION_POOL), 3))
    count = 0
    for e in entries:
        raw, intensity, aolp, mask = manifest.load_entry(e)
        m = MosaicedImage(PlanarImage(raw))
        gt = direction_stokes(intensity, aolp)
        valid = np.ones(raw.shape, bool) if mask is None else mask
        for k, name in enumerate(FUSION_POOL):
            est = normalized_stokes(CLASSIC[name](m).stokes.data)
            sq[k] += ((est - gt) ** 2)[valid].sum(axis=0)
        count += int(valid.sum())
    if count == 0:
        raise ValueError("no calibration pixels for weighted fusion")
    return inverse_mse_weights(sq / count)


def build_methods(names: Sequence[str], manifest: DatasetManifest, config: BenchmarkConfig,
                  model=None) -> dict[str, Callable[[MosaicedImage], DemosaicResult]]:
    out = {}
    for name in names:
        if name in CLASSIC:
            out[name] = CLASSIC[name]
        elif name == "atmf":
            out[name] = lambda m: fuse_atmf([CLASSIC[k](m) for k in FUSION_POOL])
        elif name == "wavg":
            weights = calibrate_wavg(manifest, config.wavg_calibration_images)
            out[name] = lambda m, w=weights: fuse_weighted_average([CLASSIC[k](m) for k in FUSION_POOL], weights=w)
        elif name == "pfadn":
            if model is None:
                raise ValueError("the pfadn method needs trained weights")
            from .pfadn import demosaic_full_frame

            out[name] = lambda m, jobs=config.jobs: demosaic_full_frame(model, m, jobs=jobs)
        else:
            raise UnknownMethod(f"unknown method {name!r}; choose from {', '.join(METHOD_NAMES)}")
    return out


def score(result: DemosaicResult, intensity: np.ndarray, aolp: np.ndarray, mask=None,
          angle_mask=None) -> tuple[float, float, float]:
    """(PSNR, intensity MAE x 1e3, angle MAE) of one prediction; predictions are clipped to [0, 1].

    ``angle_mask`` defaults to ``mask``.
    """
    pred_i = np.clip(result.intensity.data[..., 0], 0.0, 1.0)
    angle_mask = mask if angle_mask is None else angle_mask
    return (psnr(intensity, pred_i, mask), intensity_mae_e3(intensity, pred_i, mask),
            angle_mae(aolp, result.aolp.data[..., 0], angle_mask))


def angle_validity(mask, dolp_gt, threshold: float):
    """Pixels whose angle is scored: valid and, if GT DoLP is known, polarized enough."""
    if dolp_gt is None:
        return mask
    ok = dolp_gt >= threshold
    return ok if mask is None else ok & mask


def evaluate_methods(manifest: DatasetManifest, methods: dict, sigma_list: Sequence[float],
                     config: BenchmarkConfig = BenchmarkConfig(), entries=None) -> list[MetricsRow]:
    entries = manifest.test if entries is None else list(entries)
    if not entries:
        raise ValueError("manifest test split is empty")
    per = {(name, s): [] for name in methods for s in sigma_list}
    for idx, e in enumerate(entries):
        raw, intensity, aolp, mask = manifest.load_entry(e)
        amask = angle_validity(mask, manifest.load_dolp(e), config.dolp_threshold)
        clean = MosaicedImage(PlanarImage(raw.astype(np.float64)))
        for sigma in sigma_list:
            noisy = add_noise(clean, sigma, noise_seed(config.seed, idx, round(sigma * 1e9)))
            for name, fn in methods.items():
                per[(name, sigma)].append(score(fn(noisy), intensity, aolp, mask, amask))
        log.info("eval: %d/%d images", idx + 1, len(entries))
    rows = []
    for (name, sigma), vals in per.items():
        v = np.array(vals)
        rows.append(MetricsRow(name, float(sigma), float(np.mean(v[:, 0])), float(v[:, 1].mean()),
                               float(v[:, 2].mean()), len(vals)))
    return sorted(rows, key=lambda r: (r.method, r.sigma_n))


def write_metrics_csv(rows: Sequence[MetricsRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow(r.csv_fields())


def read_metrics_csv(path) -> list[MetricsRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [MetricsRow(r["method"], float(r["sigma_n"]), float(r["psnr_db"]), float(r["intensity_mae_e3"]),
                           float(r["angle_mae_deg"]), int(r["n_images"])) for r in csv.DictReader(fh)]


def write_sweep_tsv(rows: Sequence[MetricsRow], path) -> None:
    """One line per noise level, PSNR and angle MAE columns per method."""
    methods = sorted({r.method for r in rows})
    sigmas = sorted({r.sigma_n for r in rows})
    table = {(r.method, r.sigma_n): r for r in rows}
    cols = ["sigma_n"] + [f"{m}_{k}" for m in methods for k in ("psnr_db", "angle_mae_deg")]
    lines = ["\t".join(cols)]
    for s in sigmas:
        vals = [f"{s:g}"]
        for m in methods:
            r = table.get((m, s))
            vals += ["nan", "nan"] if r is None else r.csv_fields()[2:5:2]
        lines.append("\t".join(vals))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def run_benchmark(manifest: DatasetManifest, methods: Sequence[str], sigma_list: Sequence[float], out_csv,
                  config: BenchmarkConfig = BenchmarkConfig(), model=None) -> list[MetricsRow]:
    """Every method at every noise level on the test split; writes the CSV and a ``.tsv`` beside it."""
    fns = build_methods(methods, manifest, config, model)
    rows = evaluate_methods(manifest, fns, sorted(set(float(s) for s in sigma_list)), config)
    out_csv = Path(out_csv)
    write_metrics_csv(rows, out_csv)
    write_sweep_tsv(rows, out_csv.with_suffix(".tsv"))
    return rows


# ---------------------------------------------------------------------------
# training-set size sweep


SWEEP_HEADER = ["train_size", "psnr_db", "intensity_mae_e3", "angle_mae_deg", "n_images"]


def training_size_sweep(manifest: DatasetManifest, sizes: Sequence[int], train_config, out_csv,
                        pretrained_path=None, model_config=None) -> list[tuple[int, MetricsRow]]:
    """Fine-tune on growing subsets of the training split and score each on the test split.

    Every size starts again from ``pretrained_path`` (or a fresh seeded
    initialization). Subsets are nested prefixes of one seeded permutation.
    """
    from .pfadn import ModelConfig, PfadnModel, load_checkpoint, train

    available = manifest.train
    for s in sizes:
        if s < 1 or s > len(available):
            raise ValueError(f"training size {s} outside 1..{len(available)}")
    order = np.random.default_rng(train_config.seed).permutation(len(available))
    results = []
    for s in sizes:
        if pretrained_path is not None:
            model, _ = load_checkpoint(pretrained_path)
        else:
            model = PfadnModel.init(model_config or ModelConfig(), seed=train_config.seed)
        subset = [available[i] for i in sorted(order[:s])]
        model, _ = train(model, manifest, replace(train_config, max_samples=None), train_entries=subset)
        fns = build_methods(["pfadn"], manifest, BenchmarkConfig(seed=train_config.seed), model)
        row = evaluate_methods(manifest, fns, [0.0])[0]
        log.info("sweep: size %d angle_mae=%.4f psnr=%.3f", s, row.angle_mae_deg, row.psnr_db)
        results.append((s, row))
    with open(out_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for s, r in results:
            w.writerow([s] + r.csv_fields()[2:])
    return results
