"""Mosaiced convolutions: stride-2 2x2 kernels whose bank depends only on pixel parity."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node

BRANCHES = ((0, 0), (0, 1), (1, 0), (1, 1))

# MASKS[2r + c] selects the output position owned by branch (r, c)
MASKS = tuple(np.eye(4).reshape(4, 2, 2))


@dataclass
class MConvParams:
    """Four independent kernel banks, indexed by branch 2r + c."""

    kernels: list[Node]
    biases: list[Node]

    @property
    def depth(self) -> int:
        return self.kernels[0].shape[-1]

    @classmethod
    def init(cls, rng: np.random.Generator, cin: int, d: int, dtype=np.float32, prefix: str = "mconv") -> "MConvParams":
        kernels, biases = [], []
        for b in range(4):
            w = ad.glorot_uniform(rng, (2, 2, cin, d), 4 * cin, 4 * d, dtype)
            kernels.append(ad.parameter(w, f"{prefix}.{b}.kernel"))
            biases.append(ad.parameter(np.zeros(d, dtype), f"{prefix}.{b}.bias"))
        return cls(kernels, biases)

    def named(self) -> dict[str, Node]:
        out = {}
        for k, b in zip(self.kernels, self.biases):
            out[k.name] = k
            out[b.name] = b
        return out


def mconv(t: Node, r: int, c: int, kernel: Node, bias: Node) -> Node:
    """One mosaiced convolution branch, (N, H, W, C) -> (N, H, W, d)."""
    h, w = t.shape[1:3]
    if h % 2 or w % 2:
        raise ValueError(f"mosaiced convolution needs even dimensions, got {h}x{w}")
    x = ad.crop_dup(t, r, c)
    x = ad.relu(ad.conv2d(x, kernel, bias, stride=2))
    x = ad.upscale2x_nearest(x)
    return ad.mask_tile(x, MASKS[2 * r + c])


def mconv_block(t: Node, params: MConvParams) -> Node:
    out = None
    for r, c in BRANCHES:
        b = 2 * r + c
        y = mconv(t, r, c, params.kernels[b], params.biases[b])
        out = y if out is None else out + y
    return out

