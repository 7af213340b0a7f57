"""Parameter containers and the convolution layers the model is built from."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import ConvSpec, Tensor


class Module:
    """Base class: parameters are discovered from attributes in assignment order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = own.keys() - state.keys()
        unexpected = state.keys() - own.keys()
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: checkpoint shape {arr.shape} != parameter shape {p.shape}")
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def kaiming(rng: np.random.Generator, shape: tuple[int, ...]) -> Tensor:
    fan_in = int(np.prod(shape[1:]))
    return Tensor(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape), requires_grad=True)


def zeros(shape: tuple[int, ...]) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


class Conv2d(Module):
    """Convolution with bias, optionally followed by ReLU."""

    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int,
                 kernel: int | tuple[int, int] = 3, *, stride: int = 1, dilation: int = 1,
                 padding: int | None = None, relu: bool = True, zero_init: bool = False):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.spec = ConvSpec(in_channels, out_channels, kh, kw, dilation=dilation,
                             stride=stride, padding=padding)
        shape = (out_channels, in_channels, kh, kw)
        # rng is drawn from either way so later layers get the same weights
        self.weight = kaiming(rng, shape)
        if zero_init:
            self.weight.data[...] = 0.0
        self.bias = zeros((out_channels,))
        self.relu = relu

    def __call__(self, x: Tensor) -> Tensor:
        y = T.conv2d(x, self.weight, self.spec, self.bias)
        return T.relu(y) if self.relu else y


class AsymConv2d(Module):
    """1xk then kx1 dilated convolution pair, bias and ReLU after the pair."""

    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int,
                 k: int = 3, *, dilation: int = 1, relu: bool = True):
        self.weight_1k = kaiming(rng, (out_channels, in_channels, 1, k))
        self.weight_k1 = kaiming(rng, (out_channels, out_channels, k, 1))
        self.bias = zeros((out_channels,))
        self.dilation = dilation
        self.relu = relu

    def __call__(self, x: Tensor) -> Tensor:
        y = T.asymmetric_conv(x, self.weight_1k, self.weight_k1, self.dilation, self.bias)
        return T.relu(y) if self.relu else y
