"""Angle and intensity error of every method as sensor noise grows.

Repeats the sweep over several noise seeds and reports the mean and standard
error per (method, sigma).

    python3 scripts/noise_sweep.py --manifest runs/desk/data/manifest.jsonl --weights runs/desk/pfadn.bin
"""

import argparse
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from polardemosaic.evaluation import BenchmarkConfig, run_benchmark
from polardemosaic.imagecore import read_manifest
from polardemosaic.pfadn import load_checkpoint


@dataclass
class SweepConfig:
    sigmas: tuple[float, ...] = (0.0, 0.002, 0.005, 0.01, 0.02)
    seeds: tuple[int, ...] = (0, 1, 2)
    methods: tuple[str, ...] = ("naive", "bilinear", "bicubic", "atmf", "wavg")


def run(cfg: SweepConfig, manifest_path, out: Path, weights=None):
    manifest = read_manifest(manifest_path)
    methods = list(cfg.methods)
    model = None
    if weights:
        model, _ = load_checkpoint(weights)
        methods.append("pfadn")
    out.mkdir(parents=True, exist_ok=True)
    table = defaultdict(list)
    for seed in cfg.seeds:
        rows = run_benchmark(manifest, methods, cfg.sigmas, out / f"noise_seed{seed}.csv",
                             BenchmarkConfig(seed=seed), model)
        for r in rows:
            table[r.method, r.sigma_n].append(r.angle_mae_deg)

    lines = ["method\tsigma_n\tangle_mae_deg\tse"]
    for (m, s), vals in sorted(table.items()):
        v = np.asarray(vals)
        se = v.std(ddof=1) / np.sqrt(len(v)) if len(v) > 1 else 0.0
        lines.append(f"{m}\t{s:g}\t{v.mean():.4f}\t{se:.4f}")
    (out / "noise_summary.tsv").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--manifest", required=True)
    ap.add_argument("--weights")
    ap.add_argument("--out", default="runs/noise")
    args = ap.parse_args()
    run(SweepConfig(), args.manifest, Path(args.out), args.weights)
