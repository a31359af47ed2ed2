"""Differentiable NCHW primitives: convolution, pooling, batch normalization.

Output sizes follow floor mode, ``(H + 2*pad - window) // stride + 1``, which
is what a 3x3/stride-2/pad-1 stage needs on even-sized maps.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, ShapeError
from .tensor import Tensor, note_branch


def _out_size(size: int, window: int, stride: int, pad: int) -> int:
    if stride < 1 or pad < 0:
        raise ShapeError(f"invalid stride={stride} / pad={pad}")
    span = size + 2 * pad - window
    if span < 0:
        raise ShapeError(f"window {window} larger than padded input {size + 2 * pad}")
    return span // stride + 1


def _pad(x: np.ndarray, pad: int, value=0.0) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=value)


def _require_nchw(x: Tensor, what: str) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{what} expects N x C x H x W input, got {x.shape}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (N,C,H,W) with ``weight`` (O,C,kh,kw) plus bias."""
    _require_nchw(x, "conv2d")
    if weight.ndim != 4 or weight.shape[1] != x.shape[1]:
        raise ShapeError(f"weight {weight.shape} incompatible with input {x.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} != ({weight.shape[0]},)")
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    ho, wo = _out_size(h, kh, stride, pad), _out_size(w, kw, stride, pad)

    xp = _pad(x.data, pad)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # rows: (n, ho, wo); cols: (c, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = weight.data.reshape(o, -1)
    out = cols @ wmat.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gw = (gmat.T @ cols).reshape(weight.shape)
        gb = gmat.sum(axis=0) if bias is not None else None
        gx = None
        if x.requires_grad:
            gcols = (gmat @ wmat).reshape(n, ho, wo, c, kh, kw)
            gxp = np.zeros(xp.shape, dtype=g.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            gx = gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(np.ascontiguousarray(out), parents, backward)


def _windows(xp: np.ndarray, window: int, stride: int, ho: int, wo: int):
    """Yield ``(i, j, view)`` for every window offset, in row-major scan order."""
    for i in range(window):
        for j in range(window):
            yield i, j, xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]


def max_pool2d(x: Tensor, window: int = 3, stride: int = 2, pad: int = 1) -> Tensor:
    """Windowed maximum with ``-inf`` padding.

    Ties route the gradient to the first maximal position in scan order.
    """
    _require_nchw(x, "max_pool2d")
    n, c, h, w = x.shape
    ho, wo = _out_size(h, window, stride, pad), _out_size(w, window, stride, pad)
    xp = _pad(x.data, pad, -np.inf)
    out = np.full((n, c, ho, wo), -np.inf, dtype=x.dtype)
    arg = np.zeros((n, c, ho, wo), dtype=np.int16)
    for k, (_, _, view) in enumerate(_windows(xp, window, stride, ho, wo)):
        better = view > out
        out = np.where(better, view, out)
        arg[better] = k
    note_branch(arg)

    def backward(g):
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for k, (i, j, _) in enumerate(_windows(xp, window, stride, ho, wo)):
            gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += np.where(arg == k, g, 0)
        return (gxp[:, :, pad:pad + h, pad:pad + w],)

    return Tensor.from_op(out, (x,), backward)


def avg_pool2d(x: Tensor, window: int = 3, stride: int = 2, pad: int = 1) -> Tensor:
    """Windowed mean; padded positions are excluded from the denominator."""
    _require_nchw(x, "avg_pool2d")
    n, c, h, w = x.shape
    ho, wo = _out_size(h, window, stride, pad), _out_size(w, window, stride, pad)
    xp = _pad(x.data, pad)
    valid = _pad(np.ones((1, 1, h, w), dtype=x.dtype), pad)
    total = np.zeros((n, c, ho, wo), dtype=x.dtype)
    count = np.zeros((1, 1, ho, wo), dtype=x.dtype)
    for _, _, view in _windows(xp, window, stride, ho, wo):
        total += view
    for _, _, view in _windows(valid, window, stride, ho, wo):
        count += view

    def backward(g):
        share = g / count
        gxp = np.zeros(xp.shape, dtype=g.dtype)
        for i, j, _ in _windows(xp, window, stride, ho, wo):
            gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += share
        return (gxp[:, :, pad:pad + h, pad:pad + w],)

    return Tensor.from_op(total / count, (x,), backward)


def pool2d(kind: str, x: Tensor, window: int = 3, stride: int = 2, pad: int = 1) -> Tensor:
    if kind == "max":
        return max_pool2d(x, window, stride, pad)
    if kind == "avg":
        return avg_pool2d(x, window, stride, pad)
    raise ContractError(f"unknown pool kind {kind!r}")


def channel_reduce(kind: str, x: Tensor) -> Tensor:
    """Per-pixel max or mean over the channel axis: (N,C,H,W) -> (N,1,H,W)."""
    _require_nchw(x, "channel_reduce")
    if kind == "max":
        return x.max(axis=1, keepdims=True)
    if kind == "mean":
        return x.mean(axis=1, keepdims=True)
    raise ContractError(f"unknown channel reduction {kind!r}")


def global_avg_pool(x: Tensor) -> Tensor:
    """(N,C,H,W) -> (N,C)."""
    _require_nchw(x, "global_avg_pool")
    return x.mean(axis=(2, 3))


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
               running_var: np.ndarray, training: bool, momentum: float = 0.9,
               eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over the N, H, W axes.

    In training mode the (biased) batch statistics normalize the input and
    ``running_mean``/``running_var`` are updated in place as
    ``r <- momentum * r + (1 - momentum) * batch``. In eval mode only the
    running statistics are used.
    """
    _require_nchw(x, "batch_norm")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"affine parameters must have shape ({c},)")
    axes = (0, 2, 3)
    m = x.shape[0] * x.shape[2] * x.shape[3]
    if training:
        if m < 2:
            raise ContractError("training-mode batch norm needs at least 2 values per channel")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mean
        running_var *= momentum
        running_var += (1 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    shape = (1, c, 1, 1)
    xhat = (x.data - mean.reshape(shape).astype(x.dtype)) * inv_std.reshape(shape)
    out = xhat * gamma.data.reshape(shape) + beta.data.reshape(shape)

    def backward(g):
        gbeta = g.sum(axis=axes)
        ggamma = (g * xhat).sum(axis=axes)
        gxhat = g * gamma.data.reshape(shape)
        if training:
            gx = (inv_std.reshape(shape) / m) * (
                m * gxhat
                - gxhat.sum(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            gx = gxhat * inv_std.reshape(shape)
        return gx, ggamma, gbeta

    return Tensor.from_op(out, (x, gamma, beta), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` for x (N, in), weight (out, in)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"dense input {x.shape} incompatible with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"bias shape {bias.shape} != ({weight.shape[0]},)")
    out = x.data @ weight.data.T
    if bias is not None:
        out += bias.data

    def backward(g):
        # g.T @ x keeps the weight gradient C-contiguous, like the weight
        gx = g @ weight.data if x.requires_grad else None
        return gx, g.T @ x.data, (g.sum(axis=0) if bias is not None else None)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return Tensor.from_op(out, parents, backward)
