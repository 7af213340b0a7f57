"""Central finite-difference gradient checks for the ops and the assembled model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .ara import AxialAttention, ara_combine, reverse
from .losses import total_loss, weighted_bce, weighted_iou
from .model import CaraNet, ModelConfig
from .tensor import ConvSpec, Tensor

STEP = 1e-5
OP_TOLERANCE = 1e-4
MODEL_TOLERANCE = 1e-3


@dataclass(frozen=True)
class GradReport:
    name: str
    max_error: float
    checked: int
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.max_error < self.tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))


def numeric_gradient(loss: Callable[[], float], array: np.ndarray, index: tuple[int, ...],
                     step: float = STEP) -> float:
    """(f(x + h) - f(x - h)) / 2h for one entry of ``array``, restored afterwards."""
    old = array[index]
    array[index] = old + step
    up = loss()
    array[index] = old - step
    down = loss()
    array[index] = old
    return (up - down) / (2.0 * step)


def check(name: str, build: Callable[[], Tensor], tensors: Sequence[Tensor], *,
          per_tensor: int | None = None, rng: np.random.Generator | None = None,
          step: float = STEP, tolerance: float = OP_TOLERANCE) -> GradReport:
    """Compare backprop against finite differences of the scalar ``build()``.

    Every entry is probed unless ``per_tensor`` caps it, in which case that many
    entries per tensor are drawn from ``rng``.
    """
    for t in tensors:
        t.grad = None
    build().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    value = lambda: build().item()  # noqa: E731
    worst, count = 0.0, 0
    for t, a in zip(tensors, analytic):
        if per_tensor is None or t.size <= per_tensor:
            flat = range(t.size)
        else:
            flat = (rng or np.random.default_rng(0)).choice(t.size, per_tensor, replace=False)
        for i in flat:
            idx = np.unravel_index(int(i), t.shape)
            fd = numeric_gradient(value, t.data, idx, step)
            worst = max(worst, float(relative_error(a[idx], fd)))
            count += 1
    return GradReport(name, worst, count, tolerance)


def _param(rng: np.random.Generator, *shape: int, away_from: float | None = None) -> Tensor:
    x = rng.normal(size=shape)
    if away_from is not None:
        # keep entries off a kink by more than the finite-difference step
        x = np.where(np.abs(x - away_from) < 0.05, away_from + 0.05 * np.sign(x - away_from + 1e-12), x)
    return Tensor(x, requires_grad=True)


def _projected(out: Tensor, proj: np.ndarray) -> Tensor:
    return T.sum(T.mul(out, Tensor(proj)))


def op_cases(rng: np.random.Generator) -> list[tuple[str, Callable[[], Tensor], list[Tensor]]]:
    """(name, scalar builder, inputs) for every differentiable primitive."""
    cases = []

    def add(name, fn, inputs, out_shape, n_args=None):
        proj = rng.normal(size=out_shape)
        args = inputs[:n_args]
        cases.append((name, lambda: _projected(fn(*args), proj), inputs))

    x = _param(rng, 2, 3, 6, 5)
    w = _param(rng, 4, 3, 3, 3)
    b = _param(rng, 4)
    add("conv2d", lambda x, w, b: T.conv2d(x, w, ConvSpec(3, 4), b), [x, w, b], (2, 4, 6, 5))
    x = _param(rng, 1, 2, 7, 7)
    w = _param(rng, 3, 2, 3, 3)
    add("conv2d dilated", lambda x, w: T.conv2d(x, w, ConvSpec(2, 3, dilation=2)), [x, w], (1, 3, 7, 7))
    add("conv2d strided", lambda x, w: T.conv2d(x, w, ConvSpec(2, 3, stride=2, padding=1)), [x, w], (1, 3, 4, 4))
    x = _param(rng, 1, 2, 6, 6)
    w1, w2, b = _param(rng, 3, 2, 1, 3), _param(rng, 3, 3, 3, 1), _param(rng, 3)
    add("asymmetric_conv", lambda x, a, c, b: T.asymmetric_conv(x, a, c, 2, b), [x, w1, w2, b], (1, 3, 6, 6))
    a, m = _param(rng, 4, 5), _param(rng, 5, 3)
    add("matmul", T.matmul, [a, m], (4, 3))
    a, m = _param(rng, 2, 4, 3), _param(rng, 2, 3, 5)
    add("matmul batched", T.matmul, [a, m], (2, 4, 5))
    v = _param(rng, 3, 4)
    add("sigmoid", T.sigmoid, [v], (3, 4))
    v = _param(rng, 3, 4)
    add("one_minus_sigmoid", T.one_minus_sigmoid, [v], (3, 4))
    v = _param(rng, 3, 4)
    add("softplus", T.softplus, [v], (3, 4))
    v = _param(rng, 3, 4, away_from=0.0)
    add("relu", T.relu, [v], (3, 4))
    v = _param(rng, 3, 4)
    add("exp", T.exp, [v], (3, 4))
    v = Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
    add("log", T.log, [v], (3, 4))
    v = _param(rng, 3, 4)
    add("softmax", lambda t: T.softmax(t, axis=1), [v], (3, 4))
    u, v = _param(rng, 3, 4), Tensor(rng.uniform(0.5, 2.0, size=(3, 4)), requires_grad=True)
    add("mul/div", lambda p, q: T.div(T.mul(p, q), q * q), [u, v], (3, 4))
    x = _param(rng, 1, 2, 5, 4)
    add("bilinear_resize up", lambda t: T.bilinear_resize(t, 9, 11), [x], (1, 2, 9, 11))
    x = _param(rng, 1, 2, 8, 8)
    add("bilinear_resize down", lambda t: T.bilinear_resize(t, 3, 5), [x], (1, 2, 3, 5))
    x = _param(rng, 1, 2, 7, 7)
    add("avg_pool", lambda t: T.avg_pool(t, 3, 1, 1), [x], (1, 2, 7, 7))
    x = _param(rng, 1, 2, 6, 6)
    add("avg_pool strided", lambda t: T.avg_pool(t, 2), [x], (1, 2, 3, 3))
    x = Tensor(rng.permutation(36).reshape(1, 1, 6, 6) * 0.1, requires_grad=True)
    add("max_pool", lambda t: T.max_pool(t, 2), [x], (1, 1, 3, 3))

    attn = AxialAttention(np.random.default_rng(int(rng.integers(1 << 30))), 4)
    x = _param(rng, 1, 4, 5, 3)
    add("axial_attention", attn, [x, *attn.parameters()], (1, 4, 5, 3), n_args=1)
    s = _param(rng, 2, 1, 4, 4)
    add("reverse", reverse, [s], (2, 1, 4, 4))
    aa, s = _param(rng, 2, 3, 4, 4), _param(rng, 2, 1, 4, 4)
    add("ara_combine", lambda a, r: ara_combine(a, reverse(r)), [aa, s], (2, 3, 4, 4))

    mask = np.zeros((2, 1, 12, 12))
    mask[0, 0, 3:8, 2:9] = 1
    mask[1, 0, 6:, 5:] = 1
    logits = _param(rng, 2, 1, 12, 12)
    cases.append(("weighted_bce", lambda: weighted_bce(logits, mask), [logits]))
    logits2 = _param(rng, 2, 1, 12, 12)
    cases.append(("weighted_iou", lambda: weighted_iou(logits2, mask), [logits2]))
    return cases


def randomize(model: CaraNet, rng: np.random.Generator, scale: float = 0.1) -> None:
    """Give zero-initialised weights and biases random values so every path carries gradient."""
    for p in model.parameters():
        if not p.data.any():
            p.data = rng.normal(0.0, scale, size=p.shape)


def model_case(seed: int = 0, size: int = 32, per_tensor: int = 2, config: ModelConfig | None = None,
               tolerance: float = MODEL_TOLERANCE) -> GradReport:
    rng = np.random.default_rng(seed)
    model = CaraNet(config or ModelConfig(), seed)
    randomize(model, rng)
    image = Tensor(rng.random((1, 3, size, size)), requires_grad=True)
    mask = np.zeros((1, 1, size, size))
    r0, c0 = rng.integers(2, size // 2, size=2)
    mask[0, 0, r0:r0 + size // 3, c0:c0 + size // 3] = 1

    def build() -> Tensor:
        return total_loss(mask, model(image).side_maps()).total

    return check(f"full model {size}x{size}", build, [image, *model.parameters()],
                 per_tensor=per_tensor, rng=rng, tolerance=tolerance)


def run_suite(seed: int = 0, include_model: bool = True) -> list[GradReport]:
    rng = np.random.default_rng(seed)
    reports = [check(name, fn, inputs) for name, fn, inputs in op_cases(rng)]
    if include_model:
        reports.append(model_case(seed))
    return reports
