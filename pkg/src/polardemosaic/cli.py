"""Command-line entry point: ``polardemosaic <command> ...``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or configuration error.
Progress goes to standard error; results go to files or standard output.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import evaluation, lcdgt
from .classic import METHODS as CLASSIC_METHODS
from .imagecore import (
    DatasetManifest,
    FormatError,
    ManifestEntry,
    MosaicedImage,
    PlanarImage,
    read_image,
    read_manifest,
    write_pfm,
)
from .mosaic import generate_synthetic_dataset
from .runconfig import ConfigError, RunConfig

log = logging.getLogger("polardemosaic")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg: RunConfig) -> int:
    samples = args.samples if args.samples is not None else cfg["synth.samples"]
    source = args.intensity_dir or cfg["synth.intensity_dir"] or None
    generate_synthetic_dataset(source, samples, args.out, cfg.synth(), seed=args.seed)
    print(Path(args.out) / "manifest.jsonl")
    return 0


def _load_model(path):
    from .pfadn import load_checkpoint

    model, _ = load_checkpoint(path)
    return model


def cmd_demosaic(args, cfg: RunConfig) -> int:
    if args.method == "pfadn" and not args.weights:
        raise UsageError("--method pfadn requires --weights")
    frame = MosaicedImage(read_image(args.input))
    if args.method == "pfadn":
        from .pfadn import demosaic_full_frame

        result = demosaic_full_frame(_load_model(args.weights), frame, jobs=args.jobs)
    else:
        result = CLASSIC_METHODS[args.method](frame)
    prefix = args.out_prefix
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    write_pfm(PlanarImage(result.intensity.data.astype(np.float32)), f"{prefix}_intensity.pfm")
    write_pfm(PlanarImage(result.aolp.data.astype(np.float32)), f"{prefix}_aolp.pfm")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    from dataclasses import replace

    from .pfadn import PfadnModel, load_checkpoint, train, write_history_csv

    tc = cfg.train()
    if args.epochs is not None:
        tc = replace(tc, epochs=args.epochs)
    if args.seed is not None:
        tc = replace(tc, seed=args.seed)
    manifest = read_manifest(args.manifest)
    if args.resume:
        model, state = load_checkpoint(args.resume)
    else:
        model, state = PfadnModel.init(cfg.model(), seed=tc.seed), None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    model, history = train(model, manifest, tc, checkpoint=args.out, state=state)
    if tc.epochs == 0:
        model.save(args.out, extra=model.train_state.to_entries())
    if args.history:
        write_history_csv(history, args.history)
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in methods if m not in evaluation.METHOD_NAMES]
    if unknown:
        raise UsageError(f"unknown method(s): {', '.join(unknown)}")
    model = None
    if "pfadn" in methods:
        if args.weights:
            model = _load_model(args.weights)
        else:
            log.warning("no --weights given; skipping pfadn")
            methods.remove("pfadn")
    if not methods:
        raise UsageError("no methods left to evaluate")
    bc = cfg.benchmark()
    if args.seed is not None:
        bc.seed = args.seed
    bc.jobs = args.jobs
    manifest = read_manifest(args.manifest)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    evaluation.run_benchmark(manifest, methods, args.sigmas, args.out, bc, model)
    return 0


def _tiles(valid: np.ndarray, tile: int):
    """Top-left corners of non-overlapping, even-aligned tiles that are valid everywhere."""
    h, w = valid.shape
    for r in range(0, h - tile + 1, tile):
        for c in range(0, w - tile + 1, tile):
            if valid[r : r + tile, c : c + tile].all():
                yield r, c


def _alpha_from(cfg: RunConfig, args, captures):
    text = args.alpha_deg if getattr(args, "alpha_deg", None) is not None else cfg["gt.alpha_deg"]
    if text not in ("", None):
        return math.radians(float(text)), None
    observations = lcdgt.alpha_observations(captures)
    return lcdgt.estimate_alpha(observations)


def cmd_gt_build(args, cfg: RunConfig) -> int:
    dirs = lcdgt.pose_dirs(args.captures)
    captures = [lcdgt.read_capture(d) for d in dirs]
    alpha, _ = _alpha_from(cfg, args, captures)
    log.info("alpha = %.4f deg", math.degrees(alpha))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tile = cfg["gt.tile"]
    names = []
    for d, cap in zip(dirs, captures):
        pair = lcdgt.build_training_pair(cap, alpha)
        mosaic = lcdgt.subtract_black(cap.random_raw, cap.black_raw)
        obs = (pair.homography, lcdgt.naive_aolp_observation(mosaic),
               lcdgt.screen_mask_quarter(pair.homography, cap.displayed.shape[:2], mosaic.height, mosaic.width))
        count = 0
        for r, c in _tiles(pair.valid, tile):
            stem = f"{d.name}_{count:04d}"
            for kind, arr in (("input", pair.mosaic.raw), ("intensity", pair.intensity.data[..., 0]),
                              ("aolp", pair.aolp.data[..., 0])):
                write_pfm(PlanarImage(arr[r : r + tile, c : c + tile].astype(np.float32)), out / f"{kind}_{stem}.pfm")
            names.append(stem)
            count += 1
        qc = {"pose": d.name, "reprojection_error_px": pair.reprojection_error,
              "alpha_deg": math.degrees(alpha), "alpha_residual": lcdgt.alpha_residual([obs], alpha),
              "valid_fraction": float(pair.valid.mean()), "tiles": count}
        (out / f"qc_{d.name}.json").write_text(json.dumps(qc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        log.info("%s: %d tiles, reprojection %.3g px", d.name, count, pair.reprojection_error)
    if not names:
        raise RuntimeError(f"no fully valid {tile}x{tile} tiles in {args.captures}")
    order = np.random.default_rng(cfg["gt.seed"]).permutation(len(names))
    n_train = int(len(names) * cfg["gt.train_fraction"])
    train_set = set(order[:n_train].tolist())
    entries = [ManifestEntry(f"input_{s}.pfm", f"intensity_{s}.pfm", f"aolp_{s}.pfm",
                             "train" if i in train_set else "test") for i, s in enumerate(names)]
    DatasetManifest(entries, root=out).write(out / "manifest.jsonl")
    print(out / "manifest.jsonl")
    return 0


def cmd_alpha_estimate(args, cfg: RunConfig) -> int:
    captures = [lcdgt.read_capture(d) for d in lcdgt.pose_dirs(args.captures)]
    alpha, residual = lcdgt.estimate_alpha(lcdgt.alpha_observations(captures))
    print(f"alpha_deg={math.degrees(alpha):.4f} residual={residual:.6g}")
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    from dataclasses import replace

    tc = cfg.train()
    if args.epochs is not None:
        tc = replace(tc, epochs=args.epochs)
    manifest = read_manifest(args.manifest)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    evaluation.training_size_sweep(manifest, args.sizes, tc, args.out, args.pretrained, cfg.model())
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polardemosaic", description="Polarization filter array demosaicing tools.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="key=value run configuration file")
        return sp

    sp = common(sub.add_parser("synth", help="generate a synthetic training set"))
    sp.add_argument("--out", required=True)
    sp.add_argument("--samples", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--intensity-dir", help="directory of PGM/PFM intensity sources")
    sp.set_defaults(func=cmd_synth)

    sp = common(sub.add_parser("demosaic", help="demosaic one raw frame"))
    sp.add_argument("--method", required=True, choices=sorted(CLASSIC_METHODS) + ["pfadn"])
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out-prefix", required=True)
    sp.add_argument("--weights")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_demosaic)

    sp = common(sub.add_parser("train", help="train the network on a manifest"))
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True, help="checkpoint path, rewritten every epoch")
    sp.add_argument("--resume")
    sp.add_argument("--epochs", type=int, help="epochs to run (in addition to a resumed checkpoint)")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--history", help="per-epoch loss CSV")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("eval", help="benchmark methods on the test split"))
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--methods", required=True, help=f"comma-separated subset of {','.join(evaluation.METHOD_NAMES)}")
    sp.add_argument("--weights")
    sp.add_argument("--sigmas", type=_floats, default=[0.0])
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_eval)

    sp = common(sub.add_parser("gt-build", help="build training pairs from LCD captures"))
    sp.add_argument("--captures", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--alpha-deg", help="skip estimation and use this polarizer angle")
    sp.set_defaults(func=cmd_gt_build)

    sp = common(sub.add_parser("alpha-estimate", help="estimate the screen polarizer angle"))
    sp.add_argument("--captures", required=True)
    sp.set_defaults(func=cmd_alpha_estimate)

    sp = common(sub.add_parser("sweep", help="training-set size sweep"))
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--sizes", type=_ints, required=True)
    sp.add_argument("--pretrained")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig.load(args.config)
        return args.func(args, cfg)
    except (ConfigError, UsageError, evaluation.UnknownMethod) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, FormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
