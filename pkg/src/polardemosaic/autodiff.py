"""A small reverse-mode differentiation engine over numpy arrays.

Image tensors are NHWC (batch, height, width, channels). Only the operations
the demosaicing network needs are provided; there is no general broadcasting
beyond python-scalar operands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Node:
    """A value in the computation graph.

    ``backward_fn`` maps the upstream gradient to one gradient per parent
    (``None`` for parents that do not need one).
    """

    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, value, parents: Sequence["Node"] = (), backward_fn: Callable | None = None,
                 requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value)
        if not np.issubdtype(self.value.dtype, np.floating):
            self.value = self.value.astype(np.float64)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Node{label}(shape={self.shape}, dtype={self.dtype})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every node that requires it."""
        if grad is None:
            if self.value.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.value)
        order = _topological_order(self)
        grads = {id(self): np.asarray(grad, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            if node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)


def _topological_order(root: Node) -> list[Node]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def parameter(value, name: str | None = None) -> Node:
    return Node(value, requires_grad=True, name=name)


def _scalar(x) -> bool:
    return not isinstance(x, Node) and np.ndim(x) == 0


def _check_same(a: Node, b: Node):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise


def add(a, b) -> Node:
    if _scalar(b):
        a = as_node(a)
        return Node(a.value + b, (a,), lambda g: (g,))
    if _scalar(a):
        return add(b, a)
    a, b = as_node(a), as_node(b)
    _check_same(a, b)
    return Node(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a, b) -> Node:
    if _scalar(b):
        a = as_node(a)
        return Node(a.value - b, (a,), lambda g: (g,))
    if _scalar(a):
        b = as_node(b)
        return Node(a - b.value, (b,), lambda g: (-g,))
    a, b = as_node(a), as_node(b)
    _check_same(a, b)
    return Node(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a, b) -> Node:
    if _scalar(b):
        a = as_node(a)
        return Node(a.value * b, (a,), lambda g: (g * b,))
    if _scalar(a):
        return mul(b, a)
    a, b = as_node(a), as_node(b)
    _check_same(a, b)
    return Node(a.value * b.value, (a, b), lambda g: (g * b.value, g * a.value))


def div(a, b) -> Node:
    if _scalar(b):
        return mul(a, 1.0 / b)
    b = as_node(b)
    if _scalar(a):
        out = a / b.value
        return Node(out, (b,), lambda g: (-g * out / b.value,))
    a = as_node(a)
    _check_same(a, b)
    out = a.value / b.value
    return Node(out, (a, b), lambda g: (g / b.value, -g * out / b.value))


def square(x: Node) -> Node:
    return Node(x.value * x.value, (x,), lambda g: (2 * g * x.value,))


def absolute(x: Node) -> Node:
    return Node(np.abs(x.value), (x,), lambda g: (g * np.sign(x.value),))


def relu(x: Node) -> Node:
    keep = x.value > 0
    return Node(np.where(keep, x.value, 0).astype(x.dtype), (x,), lambda g: (g * keep,))


def total(x: Node) -> Node:
    return Node(x.value.sum(), (x,), lambda g: (np.broadcast_to(g, x.shape).astype(x.dtype),))


def mean(x: Node) -> Node:
    n = x.value.size
    return Node(x.value.mean(), (x,), lambda g: (np.full(x.shape, g / n, dtype=x.dtype),))


def masked_mean(x: Node, mask: np.ndarray) -> Node:
    """Mean of ``x`` over the positions where ``mask`` is true."""
    m = np.broadcast_to(np.asarray(mask, bool), x.shape)
    n = max(int(m.sum()), 1)
    return Node(x.value[m].sum() / n, (x,), lambda g: (np.where(m, g / n, 0).astype(x.dtype),))


def normalize_pairs(x: Node, eps: float = 1e-8) -> Node:
    """Scale each channel pair (last axis, size 2) to unit length: x / (|x| + eps)."""
    if x.shape[-1] != 2:
        raise ValueError("normalize_pairs expects 2 channels")
    r = np.sqrt((x.value**2).sum(axis=-1, keepdims=True))
    d = r + eps
    out = x.value / d

    def back(g):
        # d(x/d)/dx = I/d - x x^T / (r d^2)
        dot = (g * x.value).sum(axis=-1, keepdims=True)
        safe_r = np.where(r > 0, r, 1.0)
        return (g / d - x.value * dot / (safe_r * d * d),)

    return Node(out, (x,), back)


# ---------------------------------------------------------------------------
# spatial rearrangement


def pad_replicate(x: Node, top: int, bottom: int, left: int, right: int) -> Node:
    if top == bottom == left == right == 0:
        return x
    out = np.pad(x.value, ((0, 0), (top, bottom), (left, right), (0, 0)), mode="edge")
    h, w = x.shape[1:3]

    def back(g):
        g = g.copy()
        if top:
            g[:, top] += g[:, :top].sum(axis=1)
        if bottom:
            g[:, top + h - 1] += g[:, top + h :].sum(axis=1)
        g = g[:, top : top + h]
        if left:
            g[:, :, left] += g[:, :, :left].sum(axis=2)
        if right:
            g[:, :, left + w - 1] += g[:, :, left + w :].sum(axis=2)
        return (g[:, :, left : left + w],)

    return Node(out, (x,), back)


def crop(x: Node, top: int, bottom: int, left: int, right: int) -> Node:
    h, w = x.shape[1:3]
    out = x.value[:, top : h - bottom, left : w - right]

    def back(g):
        full = np.zeros(x.shape, dtype=g.dtype)
        full[:, top : h - bottom, left : w - right] = g
        return (full,)

    return Node(out, (x,), back)


def crop_dup(x: Node, r: int, c: int) -> Node:
    """Drop the first ``r`` rows and ``c`` columns, then replicate the last ones back (shape-preserving)."""
    if r == 0 and c == 0:
        return x
    return pad_replicate(crop(x, r, 0, c, 0), 0, r, 0, c)


def upscale2x_nearest(x: Node) -> Node:
    out = x.value.repeat(2, axis=1).repeat(2, axis=2)

    def back(g):
        n, h2, w2, c = g.shape
        return (g.reshape(n, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4)),)

    return Node(out, (x,), back)


def mask_tile(x: Node, m: np.ndarray) -> Node:
    """Multiply by the 2x2 binary pattern ``m`` tiled over the image plane."""
    h, w = x.shape[1:3]
    if h % 2 or w % 2:
        raise ValueError("mask_tile needs even spatial dimensions")
    tiled = np.tile(np.asarray(m, dtype=x.dtype), (h // 2, w // 2))[None, :, :, None]
    return Node(x.value * tiled, (x,), lambda g: (g * tiled,))


def space_to_depth(x: Node) -> Node:
    """(N, H, W, C) -> (N, H/2, W/2, 4C) with blocks ordered (0,0), (1,0), (0,1), (1,1) as (row, col) offsets."""
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ValueError("space_to_depth needs even spatial dimensions")
    offsets = ((0, 0), (1, 0), (0, 1), (1, 1))
    out = np.concatenate([x.value[:, r::2, s::2] for r, s in offsets], axis=-1)

    def back(g):
        full = np.empty(x.shape, dtype=g.dtype)
        for k, (r, s) in enumerate(offsets):
            full[:, r::2, s::2] = g[..., k * c : (k + 1) * c]
        return (full,)

    return Node(out, (x,), back)


# ---------------------------------------------------------------------------
# convolutions


def _out_size(n: int, k: int, s: int) -> int:
    return (n - k) // s + 1


def _im2col(xp: np.ndarray, kh: int, kw: int, s: int) -> np.ndarray:
    """(N, Ho, Wo, kh*kw*C) patches of a padded input."""
    n, hp, wp, c = xp.shape
    ho, wo = _out_size(hp, kh, s), _out_size(wp, kw, s)
    if kh == kw == 1 and s == 1:
        return xp
    if kh == kw == s:
        # non-overlapping windows are a pure reshape
        x = xp[:, : ho * s, : wo * s].reshape(n, ho, s, wo, s, c)
        return x.transpose(0, 1, 3, 2, 4, 5).reshape(n, ho, wo, kh * kw * c)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, : (ho - 1) * s + 1 : s, : (wo - 1) * s + 1 : s]
    # win: (N, Ho, Wo, C, kh, kw)
    return win.transpose(0, 1, 2, 4, 5, 3).reshape(n, ho, wo, kh * kw * c)


def _col2im(cols: np.ndarray, shape, kh: int, kw: int, s: int) -> np.ndarray:
    """Adjoint of :func:`_im2col`: scatter-add patch gradients into an image of ``shape``."""
    n, ho, wo, _ = cols.shape
    c = shape[-1]
    if kh == kw == 1 and s == 1 and shape[1:3] == (ho, wo):
        return cols
    if kh == kw == s:
        out = np.zeros(shape, dtype=cols.dtype)
        blocks = cols.reshape(n, ho, wo, kh, kw, c).transpose(0, 1, 3, 2, 4, 5).reshape(n, ho * s, wo * s, c)
        out[:, : ho * s, : wo * s] = blocks
        return out
    cols = np.ascontiguousarray(cols.reshape(n, ho, wo, kh, kw, c).transpose(3, 4, 0, 1, 2, 5))
    out = np.zeros(shape, dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, i : i + (ho - 1) * s + 1 : s, j : j + (wo - 1) * s + 1 : s] += cols[i, j]
    return out


def _weight_grad(cols: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Sum over batch and positions of patch (x) output-gradient outer products."""
    return cols.reshape(-1, cols.shape[-1]).T @ g.reshape(-1, g.shape[-1])


def conv2d(x: Node, kernels: Node, bias: Node | None = None, stride: int = 1, padding="valid") -> Node:
    """Cross-correlation. ``kernels`` is (kh, kw, Cin, Cout); ``padding`` is "valid" or ("replicate", n)."""
    kh, kw, cin, cout = kernels.shape
    if x.shape[-1] != cin:
        raise ValueError(f"input has {x.shape[-1]} channels, kernels expect {cin}")
    if padding != "valid":
        mode, amount = padding
        if mode != "replicate":
            raise ValueError(f"unsupported padding {padding!r}")
        x = pad_replicate(x, amount, amount, amount, amount)
    n, h, w, _ = x.shape
    if h < kh or w < kw:
        raise ValueError("input smaller than kernel")
    cols = _im2col(x.value, kh, kw, stride)
    wmat = kernels.value.reshape(kh * kw * cin, cout)
    out = cols @ wmat
    if bias is not None:
        out = out + bias.value

    def back(g):
        gx = None
        if x.requires_grad:
            if stride == 1 and kh * kw > 1:
                # full correlation of the output gradient with the flipped kernels
                gpad = np.pad(g, ((0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
                flipped = kernels.value[::-1, ::-1].transpose(0, 1, 3, 2).reshape(kh * kw * cout, cin)
                gx = _im2col(gpad, kh, kw, 1) @ flipped
            else:
                gx = _col2im(g @ wmat.T, x.shape, kh, kw, stride)
        gw = _weight_grad(cols, g).reshape(kernels.shape) if kernels.requires_grad else None
        gb = g.sum(axis=(0, 1, 2)) if bias is not None else None
        return gx, gw, gb

    parents = (x, kernels) + ((bias,) if bias is not None else ())
    return Node(out, parents, back)


def transposed_conv2d(x: Node, kernels: Node, bias: Node | None = None, stride: int = 2,
                      crop_before: int | None = None, out_size: tuple[int, int] | None = None) -> Node:
    """Adjoint of :func:`conv2d` (valid, same stride) with kernels (kh, kw, Cout, Cin).

    The full output has size (H - 1) * stride + kh; ``crop_before`` rows and
    columns are dropped at the top/left and the result is cut to ``out_size``.
    By default the output is exactly ``stride`` times the input.
    """
    kh, kw, cout, cin = kernels.shape
    if x.shape[-1] != cin:
        raise ValueError(f"input has {x.shape[-1]} channels, kernels expect {cin}")
    n, h, w, _ = x.shape
    full_shape = (n, (h - 1) * stride + kh, (w - 1) * stride + kw, cout)
    if crop_before is None:
        crop_before = (kh - stride + 1) // 2
    if out_size is None:
        out_size = (h * stride, w * stride)
    oh, ow = out_size
    if crop_before + oh > full_shape[1] or crop_before + ow > full_shape[2]:
        raise ValueError("requested output exceeds the full transposed-convolution extent")
    wmat = kernels.value.reshape(kh * kw * cout, cin)
    full = _col2im(x.value @ wmat.T, full_shape, kh, kw, stride)
    out = full[:, crop_before : crop_before + oh, crop_before : crop_before + ow]
    if bias is not None:
        out = out + bias.value

    def back(g):
        gfull = np.zeros(full_shape, dtype=g.dtype)
        gfull[:, crop_before : crop_before + oh, crop_before : crop_before + ow] = g
        cols = _im2col(gfull, kh, kw, stride)[:, :h, :w]
        gx = cols @ wmat if x.requires_grad else None
        gw = _weight_grad(cols, x.value).reshape(kernels.shape) if kernels.requires_grad else None
        gb = g.sum(axis=(0, 1, 2)) if bias is not None else None
        return gx, gw, gb

    parents = (x, kernels) + ((bias,) if bias is not None else ())
    return Node(out, parents, back)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    t = np.arange(size) - (size - 1) / 2
    g = np.exp(-(t**2) / (2 * sigma**2))
    return g / g.sum()


def separable_filter_valid(x: Node, taps: np.ndarray) -> Node:
    """Valid-mode correlation of every channel with the separable kernel taps x taps."""
    k = len(taps)
    taps = np.asarray(taps, dtype=x.dtype)
    rows = np.tensordot(sliding_window_view(x.value, k, axis=1), taps, axes=([-1], [0]))
    out = np.tensordot(sliding_window_view(rows, k, axis=2), taps, axes=([-1], [0]))

    def back(g):
        n, h, w, c = x.shape
        g_rows = np.zeros(rows.shape, dtype=g.dtype)
        wo = g.shape[2]
        for j in range(k):
            g_rows[:, :, j : j + wo] += taps[j] * g
        gx = np.zeros(x.shape, dtype=g.dtype)
        ho = rows.shape[1]
        for i in range(k):
            gx[:, i : i + ho] += taps[i] * g_rows
        return (gx,)

    return Node(out, (x,), back)


SSIM_K1 = 0.01
SSIM_K2 = 0.03


def ssim(a: Node, b: Node, window: int = 11, sigma: float = 1.5, data_range: float = 1.0) -> Node:
    """Mean structural similarity over valid Gaussian windows, per channel."""
    _check_same(a, b)
    taps = gaussian_window(window, sigma)
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    f = lambda t: separable_filter_valid(t, taps)  # noqa: E731
    mu_a, mu_b = f(a), f(b)
    mu_aa, mu_bb, mu_ab = square(mu_a), square(mu_b), mu_a * mu_b
    var_a = f(square(a)) - mu_aa
    var_b = f(square(b)) - mu_bb
    cov = f(a * b) - mu_ab
    num = (2.0 * mu_ab + c1) * (2.0 * cov + c2)
    den = (mu_aa + mu_bb + c1) * (var_a + var_b + c2)
    return mean(num / den)


def l1_loss(a: Node, b: Node) -> Node:
    _check_same(as_node(a), as_node(b))
    return mean(absolute(a - b))


def l2_loss(a: Node, b: Node) -> Node:
    _check_same(as_node(a), as_node(b))
    return mean(square(a - b))


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update; returns the new parameter arrays and advances ``state``."""
    state.step += 1
    t = state.step
    bc1 = 1 - state.beta1**t
    bc2 = 1 - state.beta2**t
    new = {}
    for name, w in params.items():
        g = grads.get(name)
        if g is None:
            new[name] = w
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(w)
            v = np.zeros_like(w)
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.m[name], state.v[name] = m.astype(w.dtype), v.astype(w.dtype)
        step = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        new[name] = (w - step).astype(w.dtype)
    return new


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int, dtype=np.float32) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# finite-difference oracle


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central differences of a scalar function at ``x`` (float64)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max|a - b| / max(max|a|, max|b|, tiny)."""
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-12)
    return float(np.abs(a - b).max(initial=0.0) / scale)
