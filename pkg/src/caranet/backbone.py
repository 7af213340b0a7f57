"""Res2Net-style encoder producing five feature levels at strides 2..32."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .nn import Conv2d, Module
from .tensor import ShapeError, Tensor


@dataclass(frozen=True)
class BackboneConfig:
    base_channels: int = 16
    scale: int = 4
    stage_channels: tuple[int, ...] | None = None
    stage_strides: tuple[int, ...] = (2, 4, 8, 16, 32)
    in_channels: int = 3

    def __post_init__(self):
        if self.stage_channels is None:
            b = self.base_channels
            object.__setattr__(self, "stage_channels", (b, b, 2 * b, 2 * b, 4 * b))
        if self.scale < 2:
            raise ValueError("Res2Net scale must be at least 2")
        if len(self.stage_channels) != 5 or len(self.stage_strides) != 5:
            raise ValueError("backbone needs exactly five stages")
        for c in self.stage_channels:
            if c % self.scale:
                raise ValueError(f"stage width {c} not divisible by scale {self.scale}")
        prev = 1
        for s in self.stage_strides:
            if s <= prev or s & (s - 1):
                raise ValueError(f"stage strides must be increasing powers of two: {self.stage_strides}")
            prev = s

    @property
    def max_stride(self) -> int:
        return self.stage_strides[-1]


class FeaturePyramidOut(NamedTuple):
    f1: Tensor
    f2: Tensor
    f3: Tensor
    f4: Tensor
    f5: Tensor


class Res2NetBlock(Module):
    """Hierarchical split-and-convolve residual block.

    Channels are split into ``scale`` groups ``x_1..x_s``; ``y_1 = x_1`` and
    ``y_i = conv3x3(x_i + y_{i-1})``. The concatenated ``y`` is mixed by a 1x1
    convolution and added back to the input.
    """

    def __init__(self, rng: np.random.Generator, channels: int, scale: int = 4):
        if channels % scale:
            raise ValueError(f"{channels} channels not divisible by scale {scale}")
        self.scale = scale
        self.width = channels // scale
        self.convs = [Conv2d(rng, self.width, self.width, 3) for _ in range(scale - 1)]
        self.fuse = Conv2d(rng, channels, channels, 1, relu=False, zero_init=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.width * self.scale:
            raise ShapeError(
                f"channel axis: block expects {self.width * self.scale} channels, got {x.shape[1]}"
            )
        xs = T.split(x, [self.width] * self.scale, axis=1)
        ys = [xs[0]]
        for conv, xi in zip(self.convs, xs[1:]):
            ys.append(conv(T.add(xi, ys[-1])))
        return T.add(x, self.fuse(T.concat(ys, axis=1)))


class Backbone(Module):
    def __init__(self, rng: np.random.Generator, config: BackboneConfig = BackboneConfig()):
        self.config = config
        downs, blocks = [], []
        prev_c, prev_s = config.in_channels, 1
        for c, s in zip(config.stage_channels, config.stage_strides):
            downs.append(Conv2d(rng, prev_c, c, 3, stride=s // prev_s, padding=1))
            blocks.append(Res2NetBlock(rng, c, config.scale))
            prev_c, prev_s = c, s
        self.downs = downs
        self.blocks = blocks

    def __call__(self, image: Tensor) -> FeaturePyramidOut:
        return self.encode(image)

    def encode(self, image: Tensor) -> FeaturePyramidOut:
        n, c, h, w = image.shape
        m = self.config.max_stride
        if h % m or w % m:
            raise ShapeError(f"input {h}x{w} not divisible by the largest stride {m}")
        if c != self.config.in_channels:
            raise ShapeError(f"channel axis: expected {self.config.in_channels} image channels, got {c}")
        feats = []
        x = image
        for down, block in zip(self.downs, self.blocks):
            x = block(down(x))
            feats.append(x)
        return FeaturePyramidOut(*feats)
