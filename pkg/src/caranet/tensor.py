"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation here records a closure on the output tensor that maps the
upstream gradient to one gradient per parent. ``Tensor.backward`` walks the
recorded graph in reverse topological order and accumulates into the
``grad`` of leaves that have ``requires_grad`` set.

Elementwise binary operations require identical shapes. There is no
broadcasting; callers resize or replicate explicitly.
"""

from __future__ import annotations

import builtins
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class GraphError(RuntimeError):
    """Raised when backward cannot run on the requested node."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple["Tensor", ...] = (), _backward: Callable | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        if arr.ndim and min(arr.shape) == 0:
            raise ShapeError(f"zero-sized dimension in shape {arr.shape}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    # -- autodiff ---------------------------------------------------------
    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable trainable leaf."""
        if self.data.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("loss is detached from every trainable leaf")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operators --------------------------------------------------------
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else shift(self, -other)

    def __rsub__(self, other):
        return shift(neg(self), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other) if isinstance(other, Tensor) else scale(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ (no broadcasting)")


# ---------------------------------------------------------------------------
# elementwise
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd
    return _result(out, (a, b), lambda g: (g / bd, -g * out / bd))


def elementwise(a: Tensor, b: Tensor, op: str) -> Tensor:
    if op == "add":
        return add(a, b)
    if op == "mul":
        return mul(a, b)
    raise ValueError(f"unknown elementwise op {op!r}")


def neg(a: Tensor) -> Tensor:
    return _result(-a.data, (a,), lambda g: (-g,))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.data * c, (a,), lambda g: (g * c,))


def shift(a: Tensor, c: float) -> Tensor:
    return _result(a.data + float(c), (a,), lambda g: (g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _result(np.log(ad), (a,), lambda g: (g / ad,))


_OPEN_LO = np.nextafter(0.0, 1.0)
_OPEN_HI = np.nextafter(1.0, 0.0)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so neither branch overflows; clamp keeps the result in the
    # open interval (0, 1) where float64 would round to 0.0 or 1.0
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, _OPEN_LO, _OPEN_HI, out=out)


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _result(out, (a,), lambda g: (g * out * (1.0 - out),))


def one_minus_sigmoid(a: Tensor) -> Tensor:
    """1 - sigmoid(a), computed as sigmoid(-a) to keep precision at large a."""
    out = _sigmoid(-a.data)
    return _result(out, (a,), lambda g: (-g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _result(out, (a,), lambda g: (g * _sigmoid(x),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _result(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for {a.ndim}-d tensor")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), backward)


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------

def sum(a: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:  # noqa: A001
    out = a.data.sum(axis=axis)
    shape = a.shape

    def backward(g):
        if axis is None:
            return (np.full(shape, float(g)),)
        axes = (axis,) if isinstance(axis, int) else axis
        axes = tuple(ax % len(shape) for ax in axes)
        return (np.broadcast_to(np.expand_dims(g, axes), shape).copy(),)

    return _result(np.asarray(out), (a,), backward)


def mean(a: Tensor, axis: int | tuple[int, ...] | None = None) -> Tensor:
    s = sum(a, axis)
    return scale(s, s.size / a.size)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))
    return _result(out, (a,), lambda g: (g.transpose(inv),))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat of an empty list")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            d != r for i, (d, r) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)
        ):
            raise ShapeError(f"concat: {t.shape} incompatible with {ref} along axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return _result(out, tensors, backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries starting at ``start`` along ``axis``."""
    n = a.shape[axis]
    if start < 0 or length < 1 or start + length > n:
        raise ShapeError(f"narrow [{start}, {start + length}) out of range for axis size {n}")
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[idx] = g
        return (full,)

    return _result(a.data[idx].copy(), (a,), backward)


def split(a: Tensor, sizes: Sequence[int], axis: int = 1) -> list[Tensor]:
    if builtins.sum(sizes) != a.shape[axis]:
        raise ShapeError(f"split sizes {list(sizes)} do not cover axis of size {a.shape[axis]}")
    parts, start = [], 0
    for s in sizes:
        parts.append(narrow(a, axis, start, s))
        start += s
    return parts


def repeat_channels(a: Tensor, times: int) -> Tensor:
    """Replicate a (N, 1, H, W) map ``times`` along the channel axis."""
    if a.ndim != 4 or a.shape[1] != 1:
        raise ShapeError(f"repeat_channels expects a 1-channel feature map, got {a.shape}")
    return concat([a] * times, axis=1)



# ---------------------------------------------------------------------------
# matrix product
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of 2-D tensors, or batched over identical leading dims."""
    if a.ndim < 2 or b.ndim < 2 or a.ndim != b.ndim:
        raise ShapeError(f"matmul needs matching rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul batch dims differ: {a.shape[:-2]} vs {b.shape[:-2]}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape[-1]} vs {b.shape[-2]}")
    ad, bd = a.data, b.data

    def backward(g):
        return (g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g)

    return _result(ad @ bd, (a, b), backward)


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 2-D convolution. ``padding=None`` means "same" at stride 1."""

    in_channels: int
    out_channels: int
    kernel_h: int = 3
    kernel_w: int = 3
    dilation: int = 1
    stride: int = 1
    padding: int | tuple[int, int] | None = None

    def __post_init__(self):
        for field in ("in_channels", "out_channels", "kernel_h", "kernel_w", "dilation", "stride"):
            if getattr(self, field) < 1:
                raise ValueError(f"ConvSpec.{field} must be positive")

    def extent(self) -> tuple[int, int]:
        return ((self.kernel_h - 1) * self.dilation + 1, (self.kernel_w - 1) * self.dilation + 1)

    def pads(self) -> tuple[int, int]:
        if self.padding is None:
            eh, ew = self.extent()
            return ((eh - 1) // 2, (ew - 1) // 2)
        if isinstance(self.padding, int):
            return (self.padding, self.padding)
        return tuple(self.padding)

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        eh, ew = self.extent()
        ph, pw = self.pads()
        return ((h + 2 * ph - eh) // self.stride + 1, (w + 2 * pw - ew) // self.stride + 1)


def _windows(xp: np.ndarray, eh: int, ew: int, d: int, s: int) -> np.ndarray:
    # (N, C, Ho, Wo, kh, kw) view into the padded input
    return sliding_window_view(xp, (eh, ew), axis=(2, 3))[:, :, ::s, ::s, ::d, ::d]


def conv2d(x: Tensor, weight: Tensor, spec: ConvSpec | None = None, bias: Tensor | None = None) -> Tensor:
    """Dilated, strided 2-D cross-correlation on (N, C, H, W) input."""
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be (N, C, H, W), got {x.shape}")
    if weight.ndim != 4:
        raise ShapeError(f"conv2d weight must be (O, C, kh, kw), got {weight.shape}")
    o, c, kh, kw = weight.shape
    if spec is None:
        spec = ConvSpec(c, o, kh, kw)
    if (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w) != weight.shape:
        raise ShapeError(f"weight shape {weight.shape} does not match {spec}")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"channel axis: input has {x.shape[1]} channels, weight expects {spec.in_channels}"
        )
    if bias is not None and bias.shape != (o,):
        raise ShapeError(f"bias shape {bias.shape} != ({o},)")

    n, _, h, w = x.shape
    ph, pw = spec.pads()
    eh, ew = spec.extent()
    for axis, size, pad, ext in (("height", h, ph, eh), ("width", w, pw, ew)):
        if size + 2 * pad < ext:
            raise ShapeError(f"{axis} axis: padded size {size + 2 * pad} smaller than kernel extent {ext}")
    d, s = spec.dilation, spec.stride
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    cols = _windows(xp, eh, ew, d, s)
    ho, wo = cols.shape[2], cols.shape[3]
    wd = weight.data
    out = np.tensordot(cols, wd, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, O)
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if bias is not None:
        out += bias.data[None, :, None, None]

    def backward(g):
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3])) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = np.tensordot(g, wd, axes=([1], [0]))  # (N, Ho, Wo, C, kh, kw)
            gxp = np.zeros(xp.shape)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i * d:i * d + s * (ho - 1) + 1:s, j * d:j * d + s * (wo - 1) + 1:s] += (
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = gxp[:, :, ph:ph + h, pw:pw + w]
        gb = g.sum(axis=(0, 2, 3)) if bias is not None else None
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return _result(out, parents, backward)


def asymmetric_conv(x: Tensor, weight_1k: Tensor, weight_k1: Tensor, dilation: int = 1,
                    bias: Tensor | None = None) -> Tensor:
    """A 1xk convolution followed by a kx1 convolution, both "same" padded."""
    if weight_1k.ndim != 4 or weight_1k.shape[2] != 1:
        raise ShapeError(f"first kernel must be (O, C, 1, k), got {weight_1k.shape}")
    if weight_k1.ndim != 4 or weight_k1.shape[3] != 1:
        raise ShapeError(f"second kernel must be (O, C, k, 1), got {weight_k1.shape}")
    o1, c1, _, k = weight_1k.shape
    o2, c2, k2, _ = weight_k1.shape
    if k != k2:
        raise ShapeError(f"kernel lengths differ: {k} vs {k2}")
    if c2 != o1:
        raise ShapeError(f"channel axis: second kernel expects {c2} inputs, first produces {o1}")
    mid = conv2d(x, weight_1k, ConvSpec(c1, o1, 1, k, dilation=dilation))
    return conv2d(mid, weight_k1, ConvSpec(c2, o2, k, 1, dilation=dilation), bias=bias)


# ---------------------------------------------------------------------------
# resampling and pooling
# ---------------------------------------------------------------------------

def interpolation_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row i holds the bilinear weights of output i (half-pixel centres)."""
    a = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for i in range(n_out):
        src = max((i + 0.5) * ratio - 0.5, 0.0)
        i0 = min(int(math.floor(src)), n_in - 1)
        i1 = min(i0 + 1, n_in - 1)
        t = src - i0
        a[i, i0] += 1.0 - t
        a[i, i1] += t
    return a


def bilinear_resize(x: Tensor, height: int, width: int) -> Tensor:
    if height < 1 or width < 1:
        raise ShapeError(f"target size must be positive, got {height}x{width}")
    if x.ndim != 4:
        raise ShapeError(f"bilinear_resize expects (N, C, H, W), got {x.shape}")
    h, w = x.shape[2:]
    if (h, w) == (height, width):
        return _result(x.data.copy(), (x,), lambda g: (g,))
    ah = interpolation_matrix(h, height)
    aw = interpolation_matrix(w, width)
    out = np.einsum("ih,nchw,jw->ncij", ah, x.data, aw, optimize=True)
    return _result(out, (x,), lambda g: (np.einsum("ih,ncij,jw->nchw", ah, g, aw, optimize=True),))


def _pool_prep(x: Tensor, window: int, stride: int, padding: int, fill: float):
    if window < 1 or stride < 1 or padding < 0:
        raise ValueError("pooling window and stride must be positive, padding non-negative")
    h, w = x.shape[2:]
    if window > h + 2 * padding or window > w + 2 * padding:
        raise ShapeError(f"window {window} larger than padded input {h + 2 * padding}x{w + 2 * padding}")
    p = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)), constant_values=fill) if p else x.data
    return xp, _windows(xp, window, window, 1, stride)


def avg_pool(x: Tensor, window: int, stride: int | None = None, padding: int = 0) -> Tensor:
    """Average pooling; zero padding counts toward the window size."""
    stride = window if stride is None else stride
    xp, cols = _pool_prep(x, window, stride, padding, 0.0)
    out = cols.mean(axis=(4, 5))
    ho, wo = out.shape[2:]
    h, w = x.shape[2:]
    p, k, s = padding, window, stride

    def backward(g):
        gxp = np.zeros(xp.shape)
        gs = g / (k * k)
        for i in range(k):
            for j in range(k):
                gxp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += gs
        return (gxp[:, :, p:p + h, p:p + w],)

    return _result(out, (x,), backward)


def max_pool(x: Tensor, window: int, stride: int | None = None, padding: int = 0) -> Tensor:
    stride = window if stride is None else stride
    xp, cols = _pool_prep(x, window, stride, padding, -np.inf)
    n, c, ho, wo = cols.shape[:4]
    flat = cols.reshape(n, c, ho, wo, window * window)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    h, w = x.shape[2:]
    p, s = padding, stride

    def backward(g):
        gxp = np.zeros(xp.shape)
        di, dj = np.divmod(arg, window)
        nn_, cc, ii, jj = np.indices(arg.shape)
        np.add.at(gxp, (nn_, cc, ii * s + di, jj * s + dj), g)
        return (gxp[:, :, p:p + h, p:p + w],)

    return _result(out, (x,), backward)
