"""Parameter containers for the network building blocks."""
import math
from typing import Iterator, List, Tuple

import numpy as np

from app.infrastructure.tensor import ops
from app.infrastructure.tensor.tensor import Tensor


def uniform_fan_in(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, dtype) -> Tensor:
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    bound = 1.0 / math.sqrt(max(1, fan_in))
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def zeros_param(shape: Tuple[int, ...], dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


def ones_param(shape: Tuple[int, ...], dtype) -> Tensor:
    return Tensor(np.ones(shape, dtype=dtype), requires_grad=True)


class Module:
    """Base class: parameters are discovered from attributes in insertion order."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


class Conv2d(Module):
    def __init__(self, rng, in_channels: int, out_channels: int, kernel: int = 3,
                 stride: int = 1, zero_init: bool = False, dtype=np.float32):
        shape = (out_channels, in_channels, kernel, kernel)
        self.weight = zeros_param(shape, dtype) if zero_init else uniform_fan_in(
            rng, shape, in_channels * kernel * kernel, dtype
        )
        self.bias = zeros_param((out_channels,), dtype)
        self._stride = stride
        self._pad = (kernel - 1) // 2

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self._stride, pad=self._pad)


class Linear(Module):
    def __init__(self, rng, in_features: int, out_features: int, zero_init: bool = False,
                 bias: bool = True, dtype=np.float32):
        shape = (in_features, out_features)
        self.weight = zeros_param(shape, dtype) if zero_init else uniform_fan_in(rng, shape, in_features, dtype)
        self.bias = zeros_param((out_features,), dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class GroupNorm(Module):
    def __init__(self, channels: int, groups: int = 8, dtype=np.float32):
        self.gamma = ones_param((channels,), dtype)
        self.beta = zeros_param((channels,), dtype)
        self._groups = math.gcd(groups, channels)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.group_norm(x, self.gamma, self.beta, self._groups)
