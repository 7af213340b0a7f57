"""Boundary-weighted IoU + BCE loss and its deep-supervised total."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import tensor as T
from .tensor import ShapeError, Tensor

WINDOW = 31
EMPHASIS = 5.0


def pixel_weights(mask: np.ndarray, window: int = WINDOW, emphasis: float = EMPHASIS) -> np.ndarray:
    """``1 + emphasis * |local_mean(G) - G|`` over a zero-padded square window.

    Accepts (H, W) or (N, 1, H, W) binary masks and returns the same shape.
    """
    g = np.asarray(mask, dtype=np.float64)
    if not np.isin(g, (0.0, 1.0)).all():
        raise ValueError("pixel_weights needs a binary mask")
    if window % 2 == 0:
        raise ValueError("window must be odd")
    p = window // 2
    pad = [(0, 0)] * (g.ndim - 2) + [(p, p), (p, p)]
    # integral image: exact window sums of 0/1 values
    c = np.pad(g, pad).cumsum(axis=-2).cumsum(axis=-1)
    c = np.pad(c, [(0, 0)] * (g.ndim - 2) + [(1, 0), (1, 0)])
    h, w = g.shape[-2:]
    s = (c[..., window:window + h, window:window + w] - c[..., :h, window:window + w]
         - c[..., window:window + h, :w] + c[..., :h, :w])
    return 1.0 + emphasis * np.abs(s / (window * window) - g)


def _as_4d(logits: Tensor, mask: np.ndarray) -> np.ndarray:
    g = np.asarray(mask, dtype=np.float64)
    if g.ndim == 2:
        g = g[None, None]
    if logits.shape != g.shape:
        raise ShapeError(f"logits {logits.shape} and mask {g.shape} differ")
    return g


def weighted_bce(logits: Tensor, mask: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    """Per-image weighted BCE averaged over the batch; returns a scalar."""
    g = _as_4d(logits, mask)
    w = pixel_weights(g) if weights is None else np.asarray(weights, dtype=np.float64).reshape(g.shape)
    # bce(sigmoid(x), g) = softplus(x) - x * g
    per_pixel = T.sub(T.softplus(logits), T.mul(logits, Tensor(g)))
    num = T.sum(T.mul(per_pixel, Tensor(w)), axis=(1, 2, 3))
    per_image = T.mul(num, Tensor(1.0 / w.sum(axis=(1, 2, 3))))
    return T.mean(per_image)


def weighted_iou(logits: Tensor, mask: np.ndarray, weights: np.ndarray | None = None) -> Tensor:
    g = _as_4d(logits, mask)
    w = pixel_weights(g) if weights is None else np.asarray(weights, dtype=np.float64).reshape(g.shape)
    p = T.sigmoid(logits)
    gt, wt = Tensor(g), Tensor(w)
    pg = T.mul(p, gt)
    inter = T.sum(T.mul(wt, pg), axis=(1, 2, 3))
    union = T.sum(T.mul(wt, T.sub(T.add(p, gt), pg)), axis=(1, 2, 3))
    return T.mean(T.shift(T.neg(T.div(inter, union)), 1.0))


def structure_loss(logits: Tensor, mask: np.ndarray, weights: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    g = _as_4d(logits, mask)
    w = pixel_weights(g) if weights is None else weights
    return weighted_iou(logits, g, w), weighted_bce(logits, g, w)


class MapLoss(NamedTuple):
    name: str
    iou: float
    bce: float

    @property
    def total(self) -> float:
        return self.iou + self.bce


class LossBreakdown(NamedTuple):
    total: Tensor
    per_map: list[MapLoss]


def total_loss(mask: np.ndarray, maps: Sequence[tuple[str, Tensor]]) -> LossBreakdown:
    """Sum of weighted IoU + BCE over side maps upsampled to the mask size.

    ``maps`` is a sequence of (name, logits) pairs, normally S_g, S_5, S_4, S_3.
    """
    g = np.asarray(mask, dtype=np.float64)
    if g.ndim == 2:
        g = g[None, None]
    h, w = g.shape[-2:]
    weights = pixel_weights(g)
    total = None
    parts = []
    for name, logits in maps:
        up = T.bilinear_resize(logits, h, w)
        li, lb = structure_loss(up, g, weights)
        term = T.add(li, lb)
        total = term if total is None else T.add(total, term)
        parts.append(MapLoss(name, li.item(), lb.item()))
    return LossBreakdown(total, parts)
