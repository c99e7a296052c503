"""Small synthetic learning run: train the network on a few hundred tiles and
compare it against interpolation baselines on the held-out split.

    python3 scripts/desk_experiment.py --out runs/desk
"""

import argparse
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from polardemosaic.evaluation import BenchmarkConfig, run_benchmark
from polardemosaic.mosaic import SynthConfig, generate_synthetic_dataset
from polardemosaic.pfadn import ModelConfig, PfadnModel, TrainConfig, train, write_history_csv


@dataclass
class DeskConfig:
    samples: int = 320
    seed: int = 7
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(train_fraction=0.8))
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=lambda: TrainConfig(lr=2e-3, epochs=30, batch_size=8))
    methods: tuple[str, ...] = ("naive", "bilinear", "bicubic", "atmf", "wavg", "pfadn")


def run(cfg: DeskConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "data" / "manifest.jsonl"
    if manifest_path.exists():
        from polardemosaic.imagecore import read_manifest
        manifest = read_manifest(manifest_path)
    else:
        manifest = generate_synthetic_dataset(None, cfg.samples, out / "data", cfg.synth, seed=cfg.seed)
    print(f"train={len(manifest.train)} test={len(manifest.test)}")

    t0 = time.time()
    model = PfadnModel.init(cfg.model, seed=cfg.train.seed)
    model, history = train(model, manifest, cfg.train, checkpoint=out / "pfadn.bin")
    write_history_csv(history, out / "history.csv")
    print(f"trained {len(history)} epochs in {time.time() - t0:.0f}s")

    rows = run_benchmark(manifest, cfg.methods, [0.0], out / "metrics.csv", BenchmarkConfig(), model)
    for r in rows:
        print(f"{r.method:9s} psnr={r.psnr_db:6.2f} dB  angle_mae={r.angle_mae_deg:6.3f} deg")
    (out / "config.txt").write_text(repr(asdict(cfg)) + "\n")
    return rows


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--epochs", type=int)
    ap.add_argument("--lr", type=float)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)
    cfg = DeskConfig()
    if args.epochs is not None:
        cfg.train = TrainConfig(**{**asdict(cfg.train), "epochs": args.epochs})
    if args.lr is not None:
        cfg.train = TrainConfig(**{**asdict(cfg.train), "lr": args.lr})
    run(cfg, Path(args.out))
