"""Parameter-free spatial attention gate.

For feature maps ``x`` of shape (N, C, H, W) the gate is

    g = sigmoid(channel_max(x) * channel_mean(x))        # (N, 1, H, W)

and the output is ``x * g`` with ``g`` shared across channels. Unlike CBAM
there is no convolution over the pooled maps and no channel attention; the
product is fed to the sigmoid unscaled.
"""
from __future__ import annotations

from . import functional as F
from .errors import ShapeError
from .layers import Layer
from .tensor import Tensor


def attention_gate(x: Tensor) -> Tensor:
    if x.ndim != 4:
        raise ShapeError(f"spatial attention expects N x C x H x W, got {x.shape}")
    return (F.channel_reduce("max", x) * F.channel_reduce("mean", x)).sigmoid()


def spatial_attention(x: Tensor) -> Tensor:
    return x * attention_gate(x)


class SpatialAttention(Layer):
    def forward(self, x, training=False):
        return spatial_attention(x)
