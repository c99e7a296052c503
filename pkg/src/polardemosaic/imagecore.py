"""Raster value types and binary file I/O (PGM, PFM, weight container, manifest).

All in-memory rasters are row-major with a top-left origin and (row, column,
channel) indexing. PFM's bottom-to-top row order is converted at the I/O
boundary only.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class FormatError(ValueError):
    """Base class for malformed or unsupported file contents."""


class UnsupportedFormat(FormatError):
    pass


class MalformedHeader(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class ChannelMismatch(FormatError):
    pass


class NaNPayload(FormatError):
    pass


class MagicMismatch(FormatError):
    pass


class DuplicateName(FormatError):
    pass


class PayloadSizeMismatch(FormatError):
    pass


class TrailingBytes(FormatError):
    pass


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True, eq=False)
class PlanarImage:
    """A (height, width, channels) float raster.

    ``source_maxval`` remembers the PGM maxval an image was decoded from so
    that writing it back reproduces the original file.
    """

    data: np.ndarray
    source_maxval: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise ValueError(f"expected a 2-D or 3-D array, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("PlanarImage values must be finite")
        arr = arr.copy() if arr.flags.writeable or not arr.flags.c_contiguous else arr
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def plane(self, channel: int = 0) -> np.ndarray:
        return self.data[:, :, channel]


class PFAPattern:
    """The 2x2 micro-polarizer layout: 90 45 / 135 0 degrees."""

    _ANGLES = {(0, 0): 90, (0, 1): 45, (1, 0): 135, (1, 1): 0}

    def angle_at(self, row_parity: int, col_parity: int) -> int:
        return self._ANGLES[(row_parity % 2, col_parity % 2)]

    def offset_of(self, angle: int) -> tuple[int, int]:
        """(row, col) offset inside the macro-pixel of the filter at ``angle``."""
        for pos, a in self._ANGLES.items():
            if a == angle:
                return pos
        raise KeyError(angle)

    def angle_grid(self, height: int, width: int) -> np.ndarray:
        rows = np.arange(height)[:, None] % 2
        cols = np.arange(width)[None, :] % 2
        lut = np.array([[90, 45], [135, 0]])
        return lut[rows, cols]

    def __eq__(self, other):
        return isinstance(other, PFAPattern)

    def __hash__(self):
        return hash(PFAPattern)

    def __repr__(self):
        return "PFAPattern(90,45;135,0)"


PFA = PFAPattern()


@dataclass(frozen=True, eq=False)
class MosaicedImage:
    image: PlanarImage
    pattern: PFAPattern = field(default=PFA)

    def __post_init__(self):
        img = self.image
        if not isinstance(img, PlanarImage):
            img = PlanarImage(img)
            object.__setattr__(self, "image", img)
        if img.channels != 1:
            raise ValueError("a mosaiced image has exactly one channel")
        if img.height % 2 or img.width % 2:
            raise ValueError(f"mosaiced image dimensions must be even, got {img.height}x{img.width}")

    @property
    def raw(self) -> np.ndarray:
        """The (H, W) sample plane."""
        return self.image.data[:, :, 0]

    @property
    def height(self) -> int:
        return self.image.height

    @property
    def width(self) -> int:
        return self.image.width


# StokesImage is a PlanarImage whose three channels are (S0, S1, S2).
StokesImage = PlanarImage


# ---------------------------------------------------------------------------
# PGM


def _read_header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated tokens, skipping ``#`` comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last token.
    """
    tokens = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise MalformedHeader("unexpected end of header")
        start = pos
        while pos < n and not buf[pos : pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    if pos >= n:
        raise MalformedHeader("header not terminated")
    return tokens, pos + 1


def read_pgm(path: str | os.PathLike) -> PlanarImage:
    """Read a binary (P5) PGM, scaling samples to [0, 1] by maxval."""
    buf = Path(path).read_bytes()
    if buf[:2] != b"P5":
        raise UnsupportedFormat(f"only binary P5 PGM is supported, got magic {buf[:2]!r}")
    try:
        tokens, offset = _read_header_tokens(buf, 4)
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise MalformedHeader(str(exc)) from exc
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise MalformedHeader(f"bad PGM dimensions/maxval {width}x{height}/{maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    nbytes = width * height * dtype.itemsize
    payload = buf[offset : offset + nbytes]
    if len(payload) < nbytes:
        raise TruncatedPayload(f"expected {nbytes} payload bytes, found {len(payload)}")
    samples = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return PlanarImage(samples.astype(np.float64) / maxval, source_maxval=maxval)


def write_pgm(image: PlanarImage | np.ndarray, path: str | os.PathLike, maxval: int | None = None) -> None:
    """Write a single-channel image in [0, 1] as binary PGM.

    ``maxval`` defaults to the one the image was read with, else 65535.
    """
    if not isinstance(image, PlanarImage):
        image = PlanarImage(image)
    if image.channels != 1:
        raise ChannelMismatch(f"PGM holds one channel, image has {image.channels}")
    if maxval is None:
        maxval = image.source_maxval or 65535
    if not 0 < maxval < 65536:
        raise ValueError(f"maxval out of range: {maxval}")
    q = np.rint(np.clip(image.data[:, :, 0], 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{image.width} {image.height}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + q.astype(dtype).tobytes())


# ---------------------------------------------------------------------------
# PFM


def read_pfm(path: str | os.PathLike) -> PlanarImage:
    buf = Path(path).read_bytes()
    magic = buf[:2]
    if magic == b"Pf":
        channels = 1
    elif magic == b"PF":
        channels = 3
    else:
        raise MagicMismatch(f"not a PFM file (magic {magic!r})")
    try:
        tokens, offset = _read_header_tokens(buf, 4)
        width, height = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise MalformedHeader(str(exc)) from exc
    if width <= 0 or height <= 0 or scale == 0.0:
        raise MalformedHeader("bad PFM dimensions or scale")
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    count = width * height * channels
    payload = buf[offset : offset + 4 * count]
    if len(payload) < 4 * count:
        raise TruncatedPayload(f"expected {4 * count} payload bytes, found {len(payload)}")
    data = np.frombuffer(payload, dtype=dtype).reshape(height, width, channels)
    if np.isnan(data).any():
        raise NaNPayload("PFM payload contains NaN")
    data = np.flipud(data).astype(np.float32)
    return PlanarImage(data)


def write_pfm(image: PlanarImage | np.ndarray, path: str | os.PathLike, channels: int | None = None) -> None:
    """Write a float32 PFM (little-endian, scale -1.0).

    ``channels`` selects "Pf" (1) or "PF" (3); by default it follows the image.
    """
    if not isinstance(image, PlanarImage):
        image = PlanarImage(np.asarray(image))
    channels = image.channels if channels is None else channels
    if channels not in (1, 3):
        raise ChannelMismatch(f"PFM stores 1 or 3 channels, not {channels}")
    if image.channels != channels:
        raise ChannelMismatch(f"cannot write a {image.channels}-channel image as {channels}-channel PFM")
    magic = "Pf" if channels == 1 else "PF"
    header = f"{magic}\n{image.width} {image.height}\n-1.0\n".encode("ascii")
    payload = np.flipud(image.data).astype("<f4").tobytes()
    Path(path).write_bytes(header + payload)


def read_image(path: str | os.PathLike) -> PlanarImage:
    """Dispatch on extension (.pgm / .pfm)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".pfm":
        return read_pfm(path)
    raise UnsupportedFormat(f"unsupported image extension {suffix!r}")


# ---------------------------------------------------------------------------
# weight container

WEIGHTS_MAGIC = b"PFADN001"


def save_weights(named_params: Mapping[str, np.ndarray] | Iterable[tuple[str, np.ndarray]], path) -> None:
    items = list(named_params.items()) if isinstance(named_params, Mapping) else list(named_params)
    names = [n for n, _ in items]
    if len(set(names)) != len(names):
        raise DuplicateName("duplicate parameter names")
    out = bytearray(WEIGHTS_MAGIC)
    for name, value in sorted(items, key=lambda kv: kv[0]):
        arr = np.asarray(value, dtype="<f4")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF or arr.ndim > 0xFF:
            raise ValueError(f"entry {name!r} does not fit the container")
        out += struct.pack("<H", len(raw_name)) + raw_name
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def load_weights(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != WEIGHTS_MAGIC:
        raise MagicMismatch("not a PFADN001 weight file")
    pos = 8
    out: dict[str, np.ndarray] = {}

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise PayloadSizeMismatch("weight file ends inside an entry")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    while pos < len(buf):
        if len(buf) - pos < 3:
            raise TrailingBytes(f"{len(buf) - pos} bytes after the last entry")
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(take(4 * count), dtype="<f4").reshape(dims).astype(np.float32)
        if name in out:
            raise DuplicateName(name)
        out[name] = arr
    return out


# ---------------------------------------------------------------------------
# dataset manifest


@dataclass(frozen=True)
class ManifestEntry:
    input_path: str
    intensity_gt_path: str
    aolp_gt_path: str
    split: str = "train"
    mask_path: str | None = None
    dolp_gt_path: str | None = None

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")


@dataclass
class DatasetManifest:
    """JSON-lines manifest; paths are stored relative to ``root``."""

    entries: list[ManifestEntry]
    root: Path = field(default_factory=Path)

    @property
    def train(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == "train"]

    @property
    def test(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == "test"]

    def resolve(self, rel: str) -> Path:
        return Path(self.root) / rel

    def load_entry(self, entry: ManifestEntry):
        """Return (mosaic, intensity, aolp, mask) arrays for one entry."""
        raw = read_image(self.resolve(entry.input_path)).data[:, :, 0]
        intensity = read_image(self.resolve(entry.intensity_gt_path)).data[:, :, 0]
        aolp = read_image(self.resolve(entry.aolp_gt_path)).data[:, :, 0]
        mask = None
        if entry.mask_path:
            mask = read_image(self.resolve(entry.mask_path)).data[:, :, 0] > 0.5
        return raw, intensity, aolp, mask

    def load_dolp(self, entry: ManifestEntry) -> np.ndarray | None:
        if not entry.dolp_gt_path:
            return None
        return read_image(self.resolve(entry.dolp_gt_path)).data[:, :, 0]

    def validate(self) -> None:
        for e in self.entries:
            shapes = set()
            for rel in (e.input_path, e.intensity_gt_path, e.aolp_gt_path, e.mask_path, e.dolp_gt_path):
                if rel is None:
                    continue
                p = self.resolve(rel)
                if not p.exists():
                    raise FileNotFoundError(p)
                shapes.add(read_image(p).shape[:2])
            if len(shapes) != 1:
                raise ValueError(f"inconsistent dimensions in entry {e.input_path}: {shapes}")

    def write(self, path) -> None:
        lines = []
        for e in self.entries:
            rec = {"input": e.input_path, "intensity": e.intensity_gt_path, "aolp": e.aolp_gt_path, "split": e.split}
            if e.mask_path:
                rec["mask"] = e.mask_path
            if e.dolp_gt_path:
                rec["dolp"] = e.dolp_gt_path
            lines.append(json.dumps(rec, sort_keys=True))
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            entries.append(
                ManifestEntry(rec["input"], rec["intensity"], rec["aolp"], rec.get("split", "train"), rec.get("mask"),
                              rec.get("dolp"))
            )
        except (KeyError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}:{lineno}: bad manifest line ({exc})") from exc
    return DatasetManifest(entries, root=path.parent)
