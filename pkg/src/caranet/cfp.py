"""Channel-wise feature pyramid with hierarchical feature fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import AsymConv2d, Conv2d, Module
from .tensor import ShapeError, Tensor


@dataclass(frozen=True)
class CfpConfig:
    channels: int = 32
    dilation_rates: tuple[int, ...] = (1, 2, 4, 8)
    variant: str = "regular"
    fusion: str = "concat"

    def __post_init__(self):
        k = len(self.dilation_rates)
        if k < 1 or self.channels % k:
            raise ValueError(f"{self.channels} channels not divisible into {k} pyramid channels")
        if any(r < 1 for r in self.dilation_rates):
            raise ValueError(f"dilation rates must be positive: {self.dilation_rates}")
        if self.variant not in ("regular", "asymmetric"):
            raise ValueError(f"unknown FP channel variant {self.variant!r}")
        if self.fusion not in ("concat", "sum"):
            raise ValueError(f"unknown fusion mode {self.fusion!r}")
        if self.branch_width < 3:
            raise ValueError("each pyramid channel needs at least 3 feature maps")

    @property
    def k(self) -> int:
        return len(self.dilation_rates)

    @property
    def branch_width(self) -> int:
        return self.channels // len(self.dilation_rates)


def block_widths(width: int) -> tuple[int, int, int]:
    """Output widths of the three stacked blocks; they concatenate back to ``width``."""
    a = max(1, width // 4)
    return a, a, width - 2 * a


class FpChannel(Module):
    """Three dilated conv blocks at one rate, outputs joined by concatenation."""

    def __init__(self, rng: np.random.Generator, width: int, rate: int, variant: str = "regular"):
        self.rate = rate
        widths = block_widths(width)
        ins = (width, widths[0], widths[1])
        if variant == "regular":
            self.blocks = [Conv2d(rng, i, o, 3, dilation=rate) for i, o in zip(ins, widths)]
        else:
            self.blocks = [AsymConv2d(rng, i, o, 3, dilation=rate) for i, o in zip(ins, widths)]

    def __call__(self, x: Tensor) -> Tensor:
        outs = []
        for block in self.blocks:
            x = block(x)
            outs.append(x)
        return T.concat(outs, axis=1)


def fp_channel(x: Tensor, rate: int, params: FpChannel) -> Tensor:
    if rate != params.rate:
        raise ValueError(f"parameters were built for rate {params.rate}, not {rate}")
    return params(x)


def hff_levels(outs: list[Tensor]) -> list[Tensor]:
    """Prefix sums ``level_i = level_{i-1} + out_i`` in channel order."""
    if not outs:
        raise ShapeError("no pyramid outputs to fuse")
    for o in outs[1:]:
        if o.shape != outs[0].shape:
            raise ShapeError(f"pyramid outputs differ in shape: {o.shape} vs {outs[0].shape}")
    levels = [outs[0]]
    for o in outs[1:]:
        levels.append(T.add(levels[-1], o))
    return levels


def hff_fuse(outs: list[Tensor], mode: str = "concat") -> Tensor:
    levels = hff_levels(outs)
    if mode == "concat":
        return T.concat(levels, axis=1)
    total = levels[0]
    for lv in levels[1:]:
        total = T.add(total, lv)
    return total


class CFP(Module):
    def __init__(self, rng: np.random.Generator, config: CfpConfig = CfpConfig()):
        self.config = config
        w = config.branch_width
        self.reduce = Conv2d(rng, config.channels, w, 1)
        self.branches = [FpChannel(rng, w, r, config.variant) for r in config.dilation_rates]
        # sum fusion leaves M/K maps; a 1x1 conv restores M for the residual
        self.expand = Conv2d(rng, w, config.channels, 1, relu=False, zero_init=True) if config.fusion == "sum" else None

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.config.channels:
            raise ShapeError(f"channel axis: CFP expects {self.config.channels} channels, got {x.shape[1]}")
        r = self.reduce(x)
        fused = hff_fuse([b(r) for b in self.branches], self.config.fusion)
        if self.expand is not None:
            fused = self.expand(fused)
        return T.add(x, fused)


def cfp_forward(x: Tensor, config: CfpConfig, params: CFP) -> Tensor:
    if config != params.config:
        raise ValueError("parameters were built for a different CFP configuration")
    return params(x)
