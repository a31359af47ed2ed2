"""ASH-U / ASH-L hashing networks, embeddings and binary codes."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .attention import SpatialAttention
from .errors import ContractError, ShapeError
from .layers import (
    Activation, BatchNorm2d, Conv2d, Dense, Flatten, GlobalAvgPool, Layer, Pool2d,
    ResidualBlock, he_init,
)
from .tensor import DEFAULT_DTYPE, Tensor, no_grad

ARCH_STAGES = {"U": 2, "L": 3}
DEFAULT_WIDTHS = {"U": (16, 32), "L": (16, 32, 64)}
HEADS = ("sigmoid", "relu", "linear")


@dataclass
class AshConfig:
    arch: str = "U"
    k: int = 12
    input_shape: tuple[int, int, int] = (3, 32, 32)
    widths: tuple[int, ...] | None = None
    head_activation: str = "sigmoid"
    attention: bool = True
    hidden: int = 4096
    seed: int = 0

    def __post_init__(self):
        self.arch = str(self.arch).upper()
        self.input_shape = tuple(int(d) for d in self.input_shape)
        if self.widths is None:
            self.widths = DEFAULT_WIDTHS.get(self.arch)
        if self.widths is not None:
            self.widths = tuple(int(w) for w in self.widths)

    def validate(self) -> "AshConfig":
        if self.arch not in ARCH_STAGES:
            raise ContractError(f"unknown architecture {self.arch!r}; expected U or L")
        if self.k < 1:
            raise ContractError(f"K must be at least 1, got {self.k}")
        if len(self.widths) != ARCH_STAGES[self.arch]:
            raise ContractError(
                f"ASH-{self.arch} needs {ARCH_STAGES[self.arch]} widths, got {list(self.widths)}")
        if self.head_activation not in HEADS:
            raise ContractError(f"unknown head activation {self.head_activation!r}")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ContractError(f"input shape must be C x H x W, got {self.input_shape}")
        m = math.prod(self.input_shape)
        if self.k >= m:
            warnings.warn(f"K={self.k} is not much smaller than the input dimension M={m}",
                          stacklevel=2)
        return self


def _pooled(size: int) -> int:
    return (size + 2 - 3) // 2 + 1


def _stack_u(cfg: AshConfig, dtype) -> list[tuple[str, Layer]]:
    c, h, w = cfg.input_shape
    w0, w1 = cfg.widths
    flat = w1 * _pooled(_pooled(h)) * _pooled(_pooled(w))
    layers = [
        ("conv1", Conv2d(c, w0, dtype=dtype)),
        ("bn1", BatchNorm2d(w0, dtype=dtype)),
        ("relu1", Activation("relu")),
        ("maxpool", Pool2d("max")),
        ("attention", SpatialAttention()),
        ("conv2", Conv2d(w0, w1, dtype=dtype)),
        ("bn2", BatchNorm2d(w1, dtype=dtype)),
        ("relu2", Activation("relu")),
        ("avgpool", Pool2d("avg")),
        ("flatten", Flatten()),
    ]
    return layers + _head(flat, cfg, dtype)


def _stack_l(cfg: AshConfig, dtype) -> list[tuple[str, Layer]]:
    c = cfg.input_shape[0]
    w0, w1, w2 = cfg.widths
    layers = [
        ("conv1", Conv2d(c, w0, dtype=dtype)),
        ("bn1", BatchNorm2d(w0, dtype=dtype)),
        ("relu1", Activation("relu")),
        ("res1", ResidualBlock(w0, w0, 1, dtype)),
        ("res2", ResidualBlock(w0, w1, 2, dtype)),
        ("res3", ResidualBlock(w1, w1, 1, dtype)),
        ("attention", SpatialAttention()),
        ("conv2", Conv2d(w1, w2, stride=2, dtype=dtype)),
        ("bn2", BatchNorm2d(w2, dtype=dtype)),
        ("relu2", Activation("relu")),
        ("gap", GlobalAvgPool()),
    ]
    return layers + _head(w2, cfg, dtype)


def _head(in_features: int, cfg: AshConfig, dtype) -> list[tuple[str, Layer]]:
    return [
        ("fc", Dense(in_features, cfg.hidden, dtype=dtype)),
        ("relu_fc", Activation("relu")),
        ("hash", Dense(cfg.hidden, cfg.k, dtype=dtype)),
        ("head", Activation(cfg.head_activation)),
    ]


class HashModel(Layer):
    """Ordered layer stack mapping images (N,C,H,W) to continuous codes (N,K)."""

    def __init__(self, cfg: AshConfig, layers: list[tuple[str, Layer]], dtype):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.layers = layers
        self.children = tuple(layers)
        self.params: dict[str, Tensor] = dict(self.named_parameters())
        self.buffers: dict[str, np.ndarray] = dict(self.named_buffers())

    def forward(self, x, training=False):
        if not isinstance(x, Tensor):
            x = Tensor(np.asarray(x, dtype=self.dtype))
        if x.ndim != 4 or x.shape[1:] != self.cfg.input_shape:
            raise ShapeError(f"expected N x {self.cfg.input_shape} images, got {x.shape}")
        for _, layer in self.layers:
            x = layer(x, training)
        return x

    def state(self) -> dict[str, np.ndarray]:
        """Every parameter and running statistic, in registry order."""
        out = {name: p.data for name, p in self.params.items()}
        out.update(self.buffers)
        return out

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def __repr__(self):
        body = "\n".join(f"  {name}: {layer!r}" for name, layer in self.layers)
        return f"HashModel(ASH-{self.cfg.arch}, K={self.cfg.k})\n{body}"


def build_model(cfg: AshConfig, dtype=DEFAULT_DTYPE) -> HashModel:
    """Assemble and He-initialize the network described by ``cfg``."""
    cfg.validate()
    layers = _stack_u(cfg, dtype) if cfg.arch == "U" else _stack_l(cfg, dtype)
    if not cfg.attention:
        layers = [(n, l) for n, l in layers if not isinstance(l, SpatialAttention)]
    model = HashModel(cfg, layers, dtype)
    he_init(model, cfg.seed)
    return model


def encode_batch(model: HashModel, images: np.ndarray, mode: str = "eval",
                 batch_size: int = 100) -> np.ndarray:
    """Continuous codes (N, K) for ``images``.

    ``mode="eval"`` uses frozen batch-norm statistics and is a pure function
    of the parameters and input. ``mode="train"`` normalizes with batch
    statistics of each chunk (and updates the running statistics).
    """
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    images = np.asarray(images, dtype=model.dtype)
    chunks = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            chunks.append(model(Tensor(images[start:start + batch_size]), mode == "train").data)
    if not chunks:
        return np.zeros((0, model.cfg.k), dtype=model.dtype)
    return np.concatenate(chunks)


# -- binary codes -------------------------------------------------------------

WORD_BITS = 64


def n_words(k: int) -> int:
    return (k + WORD_BITS - 1) // WORD_BITS


def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack (..., K) {0,1} arrays into (..., ceil(K/64)) uint64 words.

    Bit ``i`` lives in word ``i // 64`` at position ``i % 64`` (LSB first);
    padding bits are zero.
    """
    bits = np.asarray(bits, dtype=bool)
    k = bits.shape[-1]
    padded = np.zeros(bits.shape[:-1] + (n_words(k) * WORD_BITS,), dtype=bool)
    padded[..., :k] = bits
    as_bytes = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(as_bytes).view("<u8")


def unpack_bits(words: np.ndarray, k: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    as_bytes = words.view(np.uint8)
    return np.unpackbits(as_bytes, axis=-1, bitorder="little")[..., :k]


@dataclass(frozen=True)
class HashCode:
    """K bits packed 64 per word."""

    words: np.ndarray = field(repr=False)
    k: int

    @classmethod
    def from_bits(cls, bits: Sequence[int] | np.ndarray) -> "HashCode":
        bits = np.asarray(bits)
        if bits.ndim != 1:
            raise ShapeError("a HashCode holds a single K-bit vector")
        return cls(pack_bits(bits), bits.shape[0])

    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.k)

    def popcount(self) -> int:
        return int(np.bitwise_count(self.words).sum())

    def __eq__(self, other):
        return (isinstance(other, HashCode) and self.k == other.k
                and np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash((self.k, self.words.tobytes()))


def default_thresholds(head_activation: str, k: int,
                       train_embeddings: np.ndarray | None = None) -> np.ndarray:
    """0.5 for a sigmoid head, otherwise the per-dimension training median."""
    if head_activation == "sigmoid":
        return np.full(k, 0.5)
    if train_embeddings is None or len(train_embeddings) == 0:
        raise ContractError(f"a {head_activation} head needs training embeddings for medians")
    return np.median(np.asarray(train_embeddings, dtype=np.float64), axis=0)


def binarize(embeddings: np.ndarray, thresholds: np.ndarray | float = 0.5) -> np.ndarray:
    """Bits ``e_i > tau_i`` (strict, so ties give 0) for (..., K) embeddings."""
    e = np.asarray(embeddings, dtype=np.float64)
    tau = np.broadcast_to(np.asarray(thresholds, dtype=np.float64), (e.shape[-1],)) \
        if np.ndim(thresholds) == 0 else np.asarray(thresholds, dtype=np.float64)
    if tau.shape != (e.shape[-1],):
        raise ShapeError(f"threshold length {tau.shape} does not match K={e.shape[-1]}")
    return (e > tau).astype(np.uint8)
