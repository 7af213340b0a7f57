"""Axial reverse attention stages and the deep-to-shallow decoding chain."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .nn import Conv2d, Module
from .tensor import ShapeError, Tensor


class AxialPass(Module):
    """One 1-D attention pass along height (``axis=2``) or width (``axis=3``).

    The gate is ``sigmoid(Q K^T / sqrt(d))`` with no row normalisation.
    """

    def __init__(self, rng: np.random.Generator, channels: int, axis: int):
        if axis not in (2, 3):
            raise ValueError("axis must be 2 (height) or 3 (width)")
        self.axis = axis
        self.query = Conv2d(rng, channels, channels, 1, relu=False)
        self.key = Conv2d(rng, channels, channels, 1, relu=False)
        self.value = Conv2d(rng, channels, channels, 1, relu=False)

    def _sequences(self, x: Tensor) -> Tensor:
        n, c, h, w = x.shape
        if self.axis == 2:  # one sequence of length H per column
            return T.reshape(T.transpose(x, (0, 3, 2, 1)), (n * w, h, c))
        return T.reshape(T.transpose(x, (0, 2, 3, 1)), (n * h, w, c))

    def _restore(self, seq: Tensor, shape: tuple[int, ...]) -> Tensor:
        n, c, h, w = shape
        if self.axis == 2:
            return T.transpose(T.reshape(seq, (n, w, h, c)), (0, 3, 2, 1))
        return T.transpose(T.reshape(seq, (n, h, w, c)), (0, 3, 1, 2))

    def gate(self, x: Tensor) -> Tensor:
        q = self._sequences(self.query(x))
        k = self._sequences(self.key(x))
        scores = T.matmul(q, T.transpose(k, (0, 2, 1)))
        return T.sigmoid(T.scale(scores, 1.0 / math.sqrt(x.shape[1])))

    def __call__(self, x: Tensor) -> Tensor:
        v = self._sequences(self.value(x))
        return self._restore(T.matmul(self.gate(x), v), x.shape)


class AxialAttention(Module):
    def __init__(self, rng: np.random.Generator, channels: int):
        self.height = AxialPass(rng, channels, axis=2)
        self.width = AxialPass(rng, channels, axis=3)

    def __call__(self, x: Tensor) -> Tensor:
        return self.width(self.height(x))


def axial_attention(x: Tensor, params: AxialAttention) -> Tensor:
    return params(x)


def reverse(side_map: Tensor) -> Tensor:
    """Reverse attention weights ``1 - sigmoid(S)``."""
    if side_map.ndim != 4 or side_map.shape[1] != 1:
        raise ShapeError(f"reverse expects a 1-channel map, got {side_map.shape}")
    return T.one_minus_sigmoid(side_map)


def ara_combine(aa: Tensor, r: Tensor) -> Tensor:
    if aa.shape[2:] != r.shape[2:] or aa.shape[0] != r.shape[0]:
        raise ShapeError(f"spatial dims differ: attention {aa.shape} vs reverse map {r.shape}")
    return T.mul(aa, T.repeat_channels(r, aa.shape[1]))


class AraStage(Module):
    def __init__(self, rng: np.random.Generator, channels: int = 32):
        self.attention = AxialAttention(rng, channels)
        self.conv1 = Conv2d(rng, channels, channels, 3)
        self.conv2 = Conv2d(rng, channels, channels, 3)
        self.conv3 = Conv2d(rng, channels, 1, 3, relu=False, zero_init=True)

    def __call__(self, features: Tensor, incoming: Tensor) -> Tensor:
        if incoming.shape[2:] != features.shape[2:]:
            raise ShapeError(
                f"side map {incoming.shape[2:]} does not match features {features.shape[2:]}; resize first"
            )
        arr = ara_combine(self.attention(features), reverse(incoming))
        branch = self.conv3(self.conv2(self.conv1(arr)))
        return T.add(branch, incoming)


def ara_stage(features: Tensor, incoming: Tensor, params: AraStage) -> Tensor:
    return params(features, incoming)


class SideOutputs(NamedTuple):
    s5: Tensor
    s4: Tensor
    s3: Tensor
    prediction: Tensor


def _resize_to(x: Tensor, ref: Tensor) -> Tensor:
    return T.bilinear_resize(x, ref.shape[2], ref.shape[3])


def decode_chain(f3: Tensor, f4: Tensor, f5: Tensor, global_map: Tensor,
                 stages: tuple[AraStage, AraStage, AraStage], output_size: tuple[int, int]) -> SideOutputs:
    """Run the stages deepest first; ``stages`` is ordered (stage3, stage4, stage5)."""
    if global_map.shape[2:] != f3.shape[2:]:
        raise ShapeError(f"global map {global_map.shape[2:]} must match f3 {f3.shape[2:]}")
    stage3, stage4, stage5 = stages
    s5 = stage5(f5, _resize_to(global_map, f5))
    s4 = stage4(f4, _resize_to(s5, f4))
    s3 = stage3(f3, _resize_to(s4, f3))
    prediction = T.sigmoid(T.bilinear_resize(s3, *output_size))
    return SideOutputs(s5, s4, s3, prediction)
