"""Learnable CNN building blocks.

Every layer exposes ``named_parameters()`` (learnable tensors) and
``named_buffers()`` (running statistics) keyed by dotted local names, and is
called as ``layer(x, training)``.
"""
from __future__ import annotations

import zlib
from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import DEFAULT_DTYPE, Tensor, activation, randn_seeded


class Layer:
    children: tuple[tuple[str, "Layer"], ...] = ()

    def __call__(self, x: Tensor, training: bool = False) -> Tensor:
        return self.forward(x, training)

    def forward(self, x: Tensor, training: bool = False) -> Tensor:
        raise NotImplementedError

    def own_parameters(self) -> dict[str, Tensor]:
        return {}

    def own_buffers(self) -> dict[str, np.ndarray]:
        return {}

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self.own_parameters().items():
            yield prefix + name, p
        for cname, child in self.children:
            yield from child.named_parameters(f"{prefix}{cname}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, b in self.own_buffers().items():
            yield prefix + name, b
        for cname, child in self.children:
            yield from child.named_buffers(f"{prefix}{cname}.")

    def __repr__(self) -> str:
        return type(self).__name__


class Conv2d(Layer):
    def __init__(self, in_ch: int, out_ch: int, kernel: int = 3, stride: int = 1,
                 pad: int | None = None, dtype=DEFAULT_DTYPE):
        self.stride = stride
        self.pad = kernel // 2 if pad is None else pad
        self.weight = Tensor(np.zeros((out_ch, in_ch, kernel, kernel), dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_ch, dtype), requires_grad=True)

    def own_parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False):
        return F.conv2d(x, self.weight, self.bias, self.stride, self.pad)

    def __repr__(self):
        o, c, k, _ = self.weight.shape
        return f"Conv2d({c}->{o}, {k}x{k}, stride={self.stride}, pad={self.pad})"


class BatchNorm2d(Layer):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9,
                 dtype=DEFAULT_DTYPE):
        self.eps = eps
        self.momentum = momentum
        self.gamma = Tensor(np.ones(channels, dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype)
        self.running_var = np.ones(channels, dtype)

    def own_parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def own_buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, training=False):
        return F.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            training, self.momentum, self.eps)

    def __repr__(self):
        return f"BatchNorm2d({self.gamma.shape[0]})"


class Dense(Layer):
    def __init__(self, in_features: int, out_features: int, dtype=DEFAULT_DTYPE):
        self.weight = Tensor(np.zeros((out_features, in_features), dtype), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype), requires_grad=True)

    def own_parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, training=False):
        return F.linear(x, self.weight, self.bias)

    def __repr__(self):
        o, i = self.weight.shape
        return f"Dense({i}->{o})"


class Activation(Layer):
    def __init__(self, kind: str):
        self.kind = kind

    def forward(self, x, training=False):
        return activation(self.kind, x)

    def __repr__(self):
        return f"Activation({self.kind})"


class Pool2d(Layer):
    def __init__(self, kind: str, window: int = 3, stride: int = 2, pad: int = 1):
        self.kind, self.window, self.stride, self.pad = kind, window, stride, pad

    def forward(self, x, training=False):
        return F.pool2d(self.kind, x, self.window, self.stride, self.pad)

    def __repr__(self):
        return f"{self.kind.capitalize()}Pool({self.window}, {self.stride}, {self.pad})"


class GlobalAvgPool(Layer):
    def forward(self, x, training=False):
        return F.global_avg_pool(x)


class Flatten(Layer):
    def forward(self, x, training=False):
        return x.flatten()


class ConvBN(Layer):
    """Convolution followed by batch normalization."""

    def __init__(self, in_ch, out_ch, kernel=3, stride=1, dtype=DEFAULT_DTYPE):
        self.conv = Conv2d(in_ch, out_ch, kernel, stride, dtype=dtype)
        self.bn = BatchNorm2d(out_ch, dtype=dtype)
        self.children = (("conv", self.conv), ("bn", self.bn))

    def forward(self, x, training=False):
        return self.bn(self.conv(x, training), training)


class ResidualBlock(Layer):
    """``relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x))``.

    The shortcut is the identity unless the channel count or stride changes,
    in which case it is a strided 1x1 convolution with batch norm.
    """

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1, dtype=DEFAULT_DTYPE):
        self.branch1 = ConvBN(in_ch, out_ch, 3, stride, dtype)
        self.branch2 = ConvBN(out_ch, out_ch, 3, 1, dtype)
        children = [("branch1", self.branch1), ("branch2", self.branch2)]
        self.projection = None
        if in_ch != out_ch or stride != 1:
            self.projection = ConvBN(in_ch, out_ch, 1, stride, dtype)
            children.append(("projection", self.projection))
        self.children = tuple(children)

    def forward(self, x, training=False):
        h = self.branch1(x, training).relu()
        h = self.branch2(h, training)
        shortcut = x if self.projection is None else self.projection(x, training)
        return (h + shortcut).relu()

    def __repr__(self):
        o, c = self.branch1.conv.weight.shape[:2]
        return f"ResidualBlock({c}->{o}, stride={self.branch1.conv.stride})"


def _fan_in(weight: Tensor) -> int:
    return int(np.prod(weight.shape[1:]))


def he_init(layer: Layer, seed: int) -> Layer:
    """Reset ``layer`` in place: weights ~ N(0, 2/fan_in), biases 0, BN to identity.

    Each weight draws from its own stream keyed by ``(seed, crc32(name))``.
    """
    for name, p in layer.named_parameters():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "weight":
            stream = (seed, zlib.crc32(name.encode()))
            std = np.sqrt(2.0 / _fan_in(p))
            p.data[...] = randn_seeded(p.shape, stream, dtype=np.float64).data * std
        elif leaf == "gamma":
            p.data[...] = 1
        else:
            p.data[...] = 0
    for name, b in layer.named_buffers():
        b[...] = 1 if name.endswith("running_var") else 0
    return layer
