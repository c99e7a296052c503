"""Test error against number of fine-tuning tiles, starting from a pretrained
checkpoint or from scratch.

    python3 scripts/training_size_sweep.py --manifest runs/desk/data/manifest.jsonl --pretrained runs/desk/pfadn.bin
"""

import argparse
import logging
from dataclasses import dataclass, field
from pathlib import Path

from polardemosaic.evaluation import training_size_sweep
from polardemosaic.imagecore import read_manifest
from polardemosaic.pfadn import TrainConfig


@dataclass
class SizeSweepConfig:
    sizes: tuple[int, ...] = (16, 32, 64, 128, 256)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=1e-4, epochs=10, batch_size=8))


def run(cfg: SizeSweepConfig, manifest_path, out: Path, pretrained=None):
    manifest = read_manifest(manifest_path)
    sizes = [s for s in cfg.sizes if s <= len(manifest.train)]
    out.parent.mkdir(parents=True, exist_ok=True)
    for size, row in training_size_sweep(manifest, sizes, cfg.train, out, pretrained):
        print(f"{size:5d}  psnr={row.psnr_db:6.2f} dB  angle_mae={row.angle_mae_deg:6.3f} deg")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--pretrained")
    ap.add_argument("--out", default="runs/size_sweep.csv")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    run(SizeSweepConfig(), args.manifest, Path(args.out), args.pretrained)
