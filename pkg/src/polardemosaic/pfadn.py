"""The demosaicing network: mosaiced feature extraction, intensity and angle heads,
training loop and tiled full-frame inference."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Node
from .classic import DemosaicResult
from .imagecore import DatasetManifest, MosaicedImage, PlanarImage, load_weights, save_weights
from .mconv import MConvParams, mconv_block
from .stokes import angle_vectors, vectors_to_angles

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    tile: int = 128
    mconv_width: int = 16
    mconv_blocks: int = 3
    shrink: int = 12
    map_layers: int = 4
    expand: int = 56
    angle_widths: tuple[int, ...] = (32, 16)
    deconv_size: int = 5

    def to_entries(self) -> dict[str, np.ndarray]:
        out = {}
        for f in fields(self):
            val = getattr(self, f.name)
            out[f"meta.{f.name}"] = np.asarray(val, dtype=np.float32).reshape(-1) if isinstance(val, tuple) else np.asarray(val, np.float32)
        return out

    @classmethod
    def from_entries(cls, entries: dict[str, np.ndarray]) -> "ModelConfig":
        kw = {}
        for f in fields(cls):
            key = f"meta.{f.name}"
            if key in entries:
                v = entries[key]
                kw[f.name] = tuple(int(x) for x in v.reshape(-1)) if f.name == "angle_widths" else int(v)
        return cls(**kw)


class PfadnModel:
    """Parameters live in ``self.params`` keyed by their serialized names."""

    def __init__(self, config: ModelConfig, params: dict[str, Node]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig = ModelConfig(), seed: int = 0, dtype=np.float32) -> "PfadnModel":
        rng = np.random.default_rng(seed)
        params: dict[str, Node] = {}

        def conv(name, k, cin, cout):
            params[f"{name}.kernel"] = ad.parameter(
                ad.glorot_uniform(rng, (k, k, cin, cout), k * k * cin, k * k * cout, dtype), f"{name}.kernel")
            params[f"{name}.bias"] = ad.parameter(np.zeros(cout, dtype), f"{name}.bias")

        cin = 1
        d = config.mconv_width
        for layer in range(config.mconv_blocks):
            params.update(MConvParams.init(rng, cin, d, dtype, prefix=f"mconv{layer}").named())
            cin = d
        cube = 4 * d
        s, e = config.shrink, config.expand
        conv("shrink", 1, cube, s)
        for k in range(config.map_layers):
            conv(f"map{k}", 3, s, s)
        conv("expand", 1, s, e)
        k = config.deconv_size
        params["deconv.kernel"] = ad.parameter(ad.glorot_uniform(rng, (k, k, 1, e), k * k * e, k * k, dtype), "deconv.kernel")
        params["deconv.bias"] = ad.parameter(np.zeros(1, dtype), "deconv.bias")
        prev = cube
        for i, width in enumerate(config.angle_widths):
            conv(f"angle{i}", 3, prev, width)
            prev = width
        conv("angle_out", 3, prev, 2)
        return cls(config, params)

    # -- serialization -----------------------------------------------------

    def weights(self) -> dict[str, np.ndarray]:
        return {name: p.value for name, p in self.params.items()}

    def set_weights(self, weights: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in weights:
                raise KeyError(f"missing parameter {name}")
            if weights[name].shape != p.shape:
                raise ValueError(f"{name}: expected shape {p.shape}, got {weights[name].shape}")
            p.value = np.asarray(weights[name], dtype=p.dtype)
            p.grad = None

    def save(self, path, extra: dict[str, np.ndarray] | None = None) -> None:
        entries = dict(self.weights())
        entries.update(self.config.to_entries())
        if extra:
            entries.update(extra)
        save_weights(entries, path)

    @classmethod
    def load(cls, path) -> "PfadnModel":
        return cls.from_entries(load_weights(path))

    @classmethod
    def from_entries(cls, entries: dict[str, np.ndarray]) -> "PfadnModel":
        model = cls.init(ModelConfig.from_entries(entries))
        model.set_weights(entries)
        return model

    # -- forward -------------------------------------------------------------

    def forward(self, x, train: bool = False) -> tuple[Node, Node]:
        """(N, T, T[, 1]) mosaiced tiles -> intensity (N, T, T, 1) and unit angle vectors (N, T, T, 2)."""
        x = np.asarray(x.value if isinstance(x, Node) else x)
        if x.ndim == 3:
            x = x[..., None]
        t = self.config.tile
        if x.shape[1:] != (t, t, 1):
            raise ValueError(f"expected ({t}, {t}, 1) tiles, got {x.shape[1:]}")
        dtype = self.params["shrink.kernel"].dtype
        p = self.params if train else {k: Node(v.value) for k, v in self.params.items()}
        cfg = self.config
        h = Node(x.astype(dtype))
        for layer in range(cfg.mconv_blocks):
            bank = MConvParams(
                [p[f"mconv{layer}.{b}.kernel"] for b in range(4)], [p[f"mconv{layer}.{b}.bias"] for b in range(4)])
            h = mconv_block(h, bank)
        cube = ad.space_to_depth(h)

        def conv(inp, name, pad=0):
            padding = ("replicate", pad) if pad else "valid"
            return ad.conv2d(inp, p[f"{name}.kernel"], p[f"{name}.bias"], padding=padding)

        y = ad.relu(conv(cube, "shrink"))
        for k in range(cfg.map_layers):
            y = ad.relu(conv(y, f"map{k}", 1))
        y = ad.relu(conv(y, "expand"))
        # replicate a margin first so edge outputs get the same number of taps as interior ones
        q = (cfg.deconv_size + 1) // 4
        y = ad.pad_replicate(y, q, q, q, q)
        intensity = ad.transposed_conv2d(y, p["deconv.kernel"], p["deconv.bias"], stride=2,
                                         crop_before=(cfg.deconv_size - 1) // 2 + 2 * q, out_size=(t, t))

        a = cube
        for i in range(len(cfg.angle_widths)):
            a = ad.relu(conv(a, f"angle{i}", 1))
        a = ad.upscale2x_nearest(a)
        a = conv(a, "angle_out", 1)
        return intensity, ad.normalize_pairs(a)


# ---------------------------------------------------------------------------
# loss


def pfadn_loss(i_gt, i_pred: Node, a_gt, a_pred: Node, gamma: float = 0.5, beta: float = 0.84) -> Node:
    i_gt, a_gt = ad.as_node(i_gt), ad.as_node(a_gt)
    image_loss = (1 - beta) * ad.l1_loss(i_gt, i_pred) + beta * (1.0 - ad.ssim(i_gt, i_pred))
    angle_loss = ad.l2_loss(a_gt, a_pred)
    return gamma * image_loss + (1 - gamma) * angle_loss


# ---------------------------------------------------------------------------
# training


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    gamma: float = 0.5
    beta: float = 0.84
    batch_size: int = 8
    epochs: int = 10
    seed: int = 0
    patience: int = 3
    lr_factor: float = 0.5
    max_samples: int | None = None

    def __post_init__(self):
        if not (0 <= self.gamma <= 1 and 0 <= self.beta <= 1):
            raise ValueError("gamma and beta must lie in [0, 1]")
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 1:
            raise ValueError("batch_size and patience must be positive, epochs non-negative")


@dataclass
class TrainState:
    """Everything besides the weights that a bit-exact resume needs."""

    epoch: int = 0
    lr: float = 1e-4
    best_val: float = math.inf
    bad_epochs: int = 0
    adam: AdamState = field(default_factory=AdamState)

    def to_entries(self) -> dict[str, np.ndarray]:
        out = {
            "train.epoch": np.float32(self.epoch),
            "train.lr": np.float32(self.lr),
            "train.best_val": np.float32(self.best_val),
            "train.bad_epochs": np.float32(self.bad_epochs),
            "optim.step": np.float32(self.adam.step),
        }
        for name, m in self.adam.m.items():
            out[f"optim.m.{name}"] = m
            out[f"optim.v.{name}"] = self.adam.v[name]
        return out

    @classmethod
    def from_entries(cls, entries: dict[str, np.ndarray]) -> "TrainState | None":
        if "train.epoch" not in entries:
            return None
        lr = float(entries["train.lr"])
        adam = AdamState(lr=lr, step=int(entries["optim.step"]))
        for key, val in entries.items():
            if key.startswith("optim.m."):
                name = key[len("optim.m."):]
                adam.m[name] = val
                adam.v[name] = entries[f"optim.v.{name}"]
        return cls(int(entries["train.epoch"]), lr, float(entries["train.best_val"]),
                   int(entries["train.bad_epochs"]), adam)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


def load_tiles(manifest: DatasetManifest, entries, tile: int):
    """Stack manifest entries into (N, T, T, 1) inputs, intensities and (N, T, T, 2) angle vectors."""
    xs, ins, angs = [], [], []
    for e in entries:
        raw, intensity, aolp, _ = manifest.load_entry(e)
        if raw.shape != (tile, tile):
            raise ValueError(f"{e.input_path}: expected {tile}x{tile} tiles, got {raw.shape}")
        xs.append(raw)
        ins.append(intensity)
        angs.append(angle_vectors(aolp))
    if not xs:
        return None
    f32 = np.float32
    return (np.stack(xs)[..., None].astype(f32), np.stack(ins)[..., None].astype(f32), np.stack(angs).astype(f32))


def evaluate_loss(model: PfadnModel, data, config: TrainConfig) -> float:
    x, i_gt, a_gt = data
    total, count = 0.0, 0
    for start in range(0, len(x), config.batch_size):
        sl = slice(start, start + config.batch_size)
        i_pred, a_pred = model.forward(x[sl])
        loss = pfadn_loss(i_gt[sl], i_pred, a_gt[sl], a_pred, config.gamma, config.beta)
        total += float(loss.value) * len(x[sl])
        count += len(x[sl])
    return float(np.float32(total / count))


def train(model: PfadnModel, manifest: DatasetManifest, config: TrainConfig = TrainConfig(),
          checkpoint: str | Path | None = None, state: TrainState | None = None,
          train_entries=None) -> tuple[PfadnModel, list[EpochRecord]]:
    """Minibatch Adam on the training split for ``config.epochs`` further epochs.

    Shuffling is seeded by (seed, absolute epoch), so resuming from a
    checkpoint written by this function continues the same trajectory. The
    test split serves as validation for the plateau schedule.
    """
    entries = manifest.train if train_entries is None else list(train_entries)
    if config.max_samples is not None:
        entries = entries[: config.max_samples]
    if not entries:
        raise ValueError("manifest has no training entries")
    tile = model.config.tile
    data = load_tiles(manifest, entries, tile)
    val = load_tiles(manifest, manifest.test, tile)
    if state is None:
        lr = float(np.float32(config.lr))
        state = TrainState(lr=lr, adam=AdamState(lr=lr))
    x, i_gt, a_gt = data
    n = len(x)
    history = []
    for epoch in range(state.epoch, state.epoch + config.epochs):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            i_pred, a_pred = model.forward(x[idx], train=True)
            loss = pfadn_loss(i_gt[idx], i_pred, a_gt[idx], a_pred, config.gamma, config.beta)
            value = float(loss.value)
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, batch starting {start}")
            for p in model.params.values():
                p.grad = None
            loss.backward()
            state.adam.lr = state.lr
            new = ad.adam_step(model.weights(), {k: p.grad for k, p in model.params.items()}, state.adam)
            for k, p in model.params.items():
                p.value = new[k]
            losses.append(value * len(idx))
        train_loss = float(np.float32(sum(losses) / n))
        val_loss = evaluate_loss(model, val, config) if val is not None else train_loss
        if val_loss < state.best_val:
            state.best_val, state.bad_epochs = val_loss, 0
        else:
            state.bad_epochs += 1
            if state.bad_epochs >= config.patience:
                state.lr = float(np.float32(state.lr * config.lr_factor))
                state.bad_epochs = 0
        state.epoch = epoch + 1
        record = EpochRecord(state.epoch, train_loss, val_loss, state.lr)
        history.append(record)
        log.info("epoch %d train_loss=%.6f val_loss=%.6f lr=%.3g", record.epoch, train_loss, val_loss, state.lr)
        if checkpoint is not None:
            model.save(checkpoint, extra=state.to_entries())
    model.train_state = state
    return model, history


def write_history_csv(history: list[EpochRecord], path) -> None:
    lines = ["epoch,train_loss,val_loss,lr"]
    lines += [f"{r.epoch},{r.train_loss:.8g},{r.val_loss:.8g},{r.lr:.8g}" for r in history]
    Path(path).write_text("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[PfadnModel, TrainState | None]:
    entries = load_weights(path)
    return PfadnModel.from_entries(entries), TrainState.from_entries(entries)


# ---------------------------------------------------------------------------
# inference


def pad_even_aligned(raw: np.ndarray, height: int, width: int) -> np.ndarray:
    """Extend a mosaic to (height, width) by repeating its last macro-row/column,
    which keeps every padded pixel under the filter of its parity."""
    h, w = raw.shape
    rows = np.arange(height)
    cols = np.arange(width)
    rows = np.where(rows < h, rows, h - 2 + (rows - h) % 2)
    cols = np.where(cols < w, cols, w - 2 + (cols - w) % 2)
    return raw[rows[:, None], cols[None, :]]


def demosaic_full_frame(model: PfadnModel, frame: MosaicedImage, jobs: int = 1, batch: int = 8) -> DemosaicResult:
    t = model.config.tile
    h, w = frame.height, frame.width
    ph, pw = -(-h // t) * t, -(-w // t) * t
    raw = pad_even_aligned(frame.raw, ph, pw).astype(np.float32)
    cells = [(r, c) for r in range(0, ph, t) for c in range(0, pw, t)]
    intensity = np.zeros((ph, pw), np.float32)
    vectors = np.zeros((ph, pw, 2), np.float32)

    def run(chunk):
        tiles = np.stack([raw[r : r + t, c : c + t] for r, c in chunk])
        i_pred, a_pred = model.forward(tiles)
        return chunk, i_pred.value, a_pred.value

    chunks = [cells[k : k + batch] for k in range(0, len(cells), batch)]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            outputs = list(pool.map(run, chunks))
    else:
        outputs = map(run, chunks)
    for chunk, i_val, a_val in outputs:
        for k, (r, c) in enumerate(chunk):
            intensity[r : r + t, c : c + t] = i_val[k, :, :, 0]
            vectors[r : r + t, c : c + t] = a_val[k]
    intensity, vectors = intensity[:h, :w], vectors[:h, :w]
    return DemosaicResult(PlanarImage(intensity), PlanarImage(vectors_to_angles(vectors).astype(np.float32)))
