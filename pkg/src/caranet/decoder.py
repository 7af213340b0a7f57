"""Parallel partial decoder: fuse f3, f4, f5 into a one-channel global map."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import Conv2d, Module
from .tensor import ShapeError, Tensor


def _up(x: Tensor, factor: int) -> Tensor:
    return T.bilinear_resize(x, x.shape[2] * factor, x.shape[3] * factor)


class PartialDecoder(Module):
    """Cascaded partial decoder over the three deepest encoder levels.

    Each input is reduced to ``channels`` by a 1x1 conv. Coarse branches are
    upsampled and multiplied into finer ones, the branches are concatenated
    and two 3x3 convs plus a final 1x1 conv produce the logits.
    """

    def __init__(self, rng: np.random.Generator, in_channels: tuple[int, int, int], channels: int = 32):
        c = channels
        self.channels = c
        self.reduce3 = Conv2d(rng, in_channels[0], c, 1)
        self.reduce4 = Conv2d(rng, in_channels[1], c, 1)
        self.reduce5 = Conv2d(rng, in_channels[2], c, 1)
        self.up5_to4 = Conv2d(rng, c, c, 3)
        self.up5_to3 = Conv2d(rng, c, c, 3)
        self.up4_to3 = Conv2d(rng, c, c, 3)
        self.up5_cat4 = Conv2d(rng, c, c, 3)
        self.up4_cat3 = Conv2d(rng, 2 * c, 2 * c, 3)
        self.concat4 = Conv2d(rng, 2 * c, 2 * c, 3)
        self.concat3 = Conv2d(rng, 3 * c, 3 * c, 3)
        self.conv4 = Conv2d(rng, 3 * c, 3 * c, 3)
        self.out = Conv2d(rng, 3 * c, 1, 1, relu=False, zero_init=True)

    def reduce(self, f3: Tensor, f4: Tensor, f5: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        _check_strides(f3, f4, f5)
        return self.reduce3(f3), self.reduce4(f4), self.reduce5(f5)

    def aggregate(self, r3: Tensor, r4: Tensor, r5: Tensor) -> Tensor:
        _check_strides(r3, r4, r5)
        x4 = T.mul(self.up5_to4(_up(r5, 2)), r4)
        x3 = T.mul(T.mul(self.up5_to3(_up(r5, 4)), self.up4_to3(_up(r4, 2))), r3)
        x4 = self.concat4(T.concat([x4, self.up5_cat4(_up(r5, 2))], axis=1))
        x3 = self.concat3(T.concat([x3, self.up4_cat3(_up(x4, 2))], axis=1))
        return self.out(self.conv4(x3))

    def __call__(self, f3: Tensor, f4: Tensor, f5: Tensor) -> Tensor:
        return self.aggregate(*self.reduce(f3, f4, f5))


def partial_decode(f3: Tensor, f4: Tensor, f5: Tensor, params: PartialDecoder) -> Tensor:
    return params(f3, f4, f5)


def _check_strides(f3: Tensor, f4: Tensor, f5: Tensor) -> None:
    h3, w3 = f3.shape[2:]
    h4, w4 = f4.shape[2:]
    h5, w5 = f5.shape[2:]
    if (h3, w3) != (2 * h4, 2 * w4) or (h4, w4) != (2 * h5, 2 * w5):
        raise ShapeError(
            f"decoder inputs must halve in resolution per level, got {h3}x{w3}, {h4}x{w4}, {h5}x{w5}"
        )
