"""Flat ``key=value`` run configuration with namespaced keys and strict validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import BenchmarkConfig
from .mosaic import RandomFieldConfig, SynthConfig
from .pfadn import ModelConfig, TrainConfig


class ConfigError(ValueError):
    pass


def _int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


# key -> (default, parser)
DEFAULTS: dict[str, tuple[object, type | object]] = {
    "synth.tile": (128, int),
    "synth.samples": (5120, int),
    "synth.train_fraction": (0.75, float),
    "synth.quantize_bits": (0, int),
    "synth.dolp_min": (0.2, float),
    "synth.dolp_max": (1.0, float),
    "synth.harmonics": (8, int),
    "synth.max_frequency": (4.0, float),
    "synth.amplitude_decay": (1.5, float),
    "synth.intensity_dir": ("", str),
    "synth.write_dolp": (0, int),
    "model.tile": (128, int),
    "model.mconv_width": (16, int),
    "model.mconv_blocks": (3, int),
    "model.shrink": (12, int),
    "model.map_layers": (4, int),
    "model.expand": (56, int),
    "model.angle_widths": ((32, 16), _int_tuple),
    "model.deconv_size": (5, int),
    "train.lr": (1e-4, float),
    "train.gamma": (0.5, float),
    "train.beta": (0.84, float),
    "train.batch_size": (8, int),
    "train.epochs": (10, int),
    "train.seed": (0, int),
    "train.patience": (3, int),
    "train.lr_factor": (0.5, float),
    "train.max_samples": (0, int),
    "eval.seed": (0, int),
    "eval.wavg_calibration_images": (32, int),
    "eval.dolp_threshold": (0.02, float),
    "gt.tile": (128, int),
    "gt.train_fraction": (0.75, float),
    "gt.seed": (0, int),
    "gt.alpha_deg": ("", str),
}


@dataclass
class RunConfig:
    values: dict[str, object] = field(default_factory=lambda: {k: v[0] for k, v in DEFAULTS.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, text: str) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        parser = DEFAULTS[key][1]
        try:
            self.values[key] = parser(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r}") from exc

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        cfg = cls()
        if path is None:
            return cfg
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                cfg.set(key, value)
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        return cfg

    def synth(self) -> SynthConfig:
        v = self.values
        return SynthConfig(
            tile=v["synth.tile"],
            field=RandomFieldConfig(v["synth.harmonics"], v["synth.max_frequency"], v["synth.amplitude_decay"]),
            dolp_range=(v["synth.dolp_min"], v["synth.dolp_max"]),
            quantize_bits=v["synth.quantize_bits"],
            train_fraction=v["synth.train_fraction"],
            write_dolp=bool(v["synth.write_dolp"]),
        )

    def model(self) -> ModelConfig:
        v = self.values
        return ModelConfig(v["model.tile"], v["model.mconv_width"], v["model.mconv_blocks"], v["model.shrink"],
                           v["model.map_layers"], v["model.expand"], v["model.angle_widths"], v["model.deconv_size"])

    def train(self) -> TrainConfig:
        v = self.values
        return TrainConfig(v["train.lr"], v["train.gamma"], v["train.beta"], v["train.batch_size"],
                           v["train.epochs"], v["train.seed"], v["train.patience"], v["train.lr_factor"],
                           v["train.max_samples"] or None)

    def benchmark(self) -> BenchmarkConfig:
        v = self.values
        return BenchmarkConfig(v["eval.wavg_calibration_images"], v["eval.seed"],
                               dolp_threshold=v["eval.dolp_threshold"])
