"""Siamese pairwise training.

Both images of a pair go through the same :class:`HashModel` (one parameter
registry, two forward passes), and the contrastive loss

    L = mean_i [ 0.5 * (1 - y_i) * D_i + 0.5 * y_i * max(r*K - D_i, 0) ]

pulls same-class codes together (``y = 0``) and pushes different-class codes
at least ``r*K`` apart (``y = 1``).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ContractError, DataError, DivergenceError, ShapeError
from .model import HashModel
from .tensor import Tensor, make_rng, relu, sqrt

logger = logging.getLogger(__name__)

SIMILAR, DISSIMILAR = 0, 1


@dataclass
class LossConfig:
    r: float = 0.5
    k: int = 12
    distance: str = "squared_l2"

    def __post_init__(self):
        if not 0.0 <= self.r <= 1.0:
            raise ContractError(f"r must lie in [0, 1], got {self.r}")
        if self.distance not in ("squared_l2", "l2"):
            raise ContractError(f"unknown distance mode {self.distance!r}")

    @property
    def margin(self) -> float:
        return self.r * self.k


def code_distance(h1: Tensor, h2: Tensor, distance: str = "squared_l2") -> Tensor:
    diff = h1 - h2
    d = (diff * diff).sum(axis=1)
    return sqrt(d) if distance == "l2" else d


def pairwise_loss(h1: Tensor, h2: Tensor, y, cfg: LossConfig) -> Tensor:
    """Mean contrastive loss over a batch of code pairs (n, K) with labels y (n,)."""
    y = np.asarray(y)
    if h1.shape != h2.shape or h1.ndim != 2 or y.shape != (h1.shape[0],):
        raise ShapeError(f"pair shapes {h1.shape}, {h2.shape} and labels {y.shape} disagree")
    if h1.shape[1] != cfg.k:
        raise ShapeError(f"codes have {h1.shape[1]} dims, loss configured for K={cfg.k}")
    if not np.isin(y, (0, 1)).all():
        raise ContractError("similarity labels must be 0 (similar) or 1 (dissimilar)")
    y = y.astype(h1.dtype)
    d = code_distance(h1, h2, cfg.distance)
    hinge = relu(cfg.margin - d)  # gradient 0 at the boundary
    per_pair = d * (0.5 * (1 - y)) + hinge * (0.5 * y)
    return per_pair.mean()


# -- pair sampling ------------------------------------------------------------

@dataclass
class PairBatch:
    left: np.ndarray
    right: np.ndarray
    y: np.ndarray
    left_ids: np.ndarray | None = None
    right_ids: np.ndarray | None = None

    def __post_init__(self):
        if not (len(self.left) == len(self.right) == len(self.y)):
            raise ShapeError("pair batch halves and labels must have equal length")
        if not np.isin(self.y, (0, 1)).all():
            raise ContractError("similarity labels must be 0 or 1")


class PairSampler:
    """Draws uniformly random ordered pairs of distinct items with a given label.

    Similar pairs: first item weighted by ``n_c - 1``, second uniform over the
    rest of its class. Dissimilar pairs: first item weighted by ``N - n_c``,
    second uniform over other classes. Both are uniform over valid pairs.
    """

    def __init__(self, labels):
        self.labels = np.asarray(labels)
        if self.labels.ndim != 1 or len(self.labels) < 2:
            raise DataError("pair sampling needs at least two items")
        classes, inverse, counts = np.unique(self.labels, return_inverse=True, return_counts=True)
        self.members = [np.flatnonzero(inverse == c) for c in range(len(classes))]
        self.class_of = inverse
        size = counts[inverse]
        n = len(self.labels)
        self.similar_weight = (size - 1).astype(np.float64)
        self.dissimilar_weight = (n - size).astype(np.float64)
        self.others = {c: np.flatnonzero(inverse != c) for c in range(len(classes))}

    def sample(self, n_pairs: int, similar_fraction: float, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not 0.0 <= similar_fraction <= 1.0:
            raise ContractError(f"similar_fraction must lie in [0, 1], got {similar_fraction}")
        n_sim = int(round(n_pairs * similar_fraction))
        if n_sim and self.similar_weight.sum() == 0:
            raise DataError("similar pair requested but every class has a single item")
        if n_pairs - n_sim and self.dissimilar_weight.sum() == 0:
            raise DataError("dissimilar pair requested but the data has a single class")
        y = np.array([SIMILAR] * n_sim + [DISSIMILAR] * (n_pairs - n_sim), dtype=np.int64)
        y = y[rng.permutation(n_pairs)]
        left = np.empty(n_pairs, dtype=np.int64)
        right = np.empty(n_pairs, dtype=np.int64)
        sim_cdf = np.cumsum(self.similar_weight)
        dis_cdf = np.cumsum(self.dissimilar_weight)
        for t in range(n_pairs):
            similar = y[t] == SIMILAR
            cdf = sim_cdf if similar else dis_cdf
            i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            c = self.class_of[i]
            if similar:
                pool = self.members[c]
                pos = int(np.searchsorted(pool, i))
                pick = int(rng.integers(len(pool) - 1))
                j = pool[pick + (pick >= pos)]
            else:
                pool = self.others[c]
                j = pool[rng.integers(len(pool))]
            left[t], right[t] = i, j
        return left, right, y


def sample_pairs(labels, n_pairs: int, similar_fraction: float = 0.5, seed=0):
    """``(left_idx, right_idx, y)`` index arrays for ``n_pairs`` random pairs.

    Exactly ``round(n_pairs * similar_fraction)`` pairs are similar (y=0),
    in shuffled order; deterministic given ``seed``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    return PairSampler(labels).sample(n_pairs, similar_fraction, rng)


# -- optimizer ----------------------------------------------------------------

def decays(name: str) -> bool:
    """Weight decay applies to convolution and dense weights only."""
    return name.rsplit(".", 1)[-1] == "weight"


class SGD:
    """Mini-batch SGD with momentum and L2 weight decay.

    Per parameter: ``v <- momentum*v + (g + weight_decay*w)``; ``w <- w - lr*v``.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 0.01, momentum: float = 0.9,
                 weight_decay: float = 0.001, decay_filter: Callable[[str], bool] = decays):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.decay_filter = decay_filter
        self.velocity = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._scratch: dict[str, np.ndarray] = {}

    def step(self, grads: dict[str, np.ndarray] | None = None) -> None:
        for name, p in self.params.items():
            g = p.grad if grads is None else grads[name]
            if g is None:
                continue
            if g.shape != p.shape:
                raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
            v = self.velocity[name]
            v *= self.momentum
            v += g
            if self.weight_decay and self.decay_filter(name):
                tmp = self._scratch.setdefault(name, np.empty_like(p.data))
                np.multiply(p.data, self.weight_decay, out=tmp)
                v += tmp
            tmp = self._scratch.setdefault(name, np.empty_like(p.data))
            np.multiply(v, self.lr, out=tmp)
            p.data -= tmp


def sgd_momentum_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], opt: SGD) -> None:
    if set(grads) != set(params):
        raise ShapeError("parameter and gradient registries do not align")
    opt.params = params
    opt.step(grads)


# -- training loop ------------------------------------------------------------

@dataclass
class TrainPlan:
    epochs: int = 50
    batch_size: int = 10
    seed: int = 0
    similar_fraction: float = 0.5
    lr: float = 0.01
    lr_decay_epoch: int | None = 40
    lr_decay: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.001

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ContractError("epochs and batch_size must be at least 1")

    def lr_at(self, epoch: int) -> float:
        if self.lr_decay_epoch is not None and epoch >= self.lr_decay_epoch:
            return self.lr * self.lr_decay
        return self.lr

    def steps_per_epoch(self, n_items: int) -> int:
        return math.ceil(n_items / self.batch_size)


@dataclass
class TrainResult:
    history: list[float] = field(default_factory=list)
    steps: int = 0


def train_step(model: HashModel, batch: PairBatch, loss_cfg: LossConfig, opt: SGD) -> float:
    for p in model.params.values():
        p.grad = None
    h1 = model(Tensor(batch.left, dtype=model.dtype), training=True)
    h2 = model(Tensor(batch.right, dtype=model.dtype), training=True)
    loss = pairwise_loss(h1, h2, batch.y, loss_cfg)
    value = loss.item()
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss {value}")
    loss.backward()
    opt.step()
    return value


def train(model: HashModel, images: np.ndarray, labels, plan: TrainPlan,
          loss_cfg: LossConfig | None = None, opt: SGD | None = None,
          callback: Callable[[int, float], None] | None = None) -> TrainResult:
    """Train ``model`` in place; one epoch is ``ceil(N / batch_size)`` pair batches.

    Pairs are re-sampled every iteration from a stream seeded by ``plan.seed``.
    Returns the per-epoch mean loss history.
    """
    images = np.asarray(images, dtype=model.dtype)
    labels = np.asarray(labels)
    if len(images) == 0:
        raise DataError("cannot train on an empty dataset")
    if len(images) != len(labels):
        raise ShapeError("images and labels differ in length")
    loss_cfg = loss_cfg or LossConfig(k=model.cfg.k)
    if loss_cfg.k != model.cfg.k:
        raise ContractError(f"loss K={loss_cfg.k} differs from model K={model.cfg.k}")
    opt = opt or SGD(model.params, plan.lr, plan.momentum, plan.weight_decay)
    sampler = PairSampler(labels)
    rng = make_rng((plan.seed, 1))
    steps = plan.steps_per_epoch(len(images))
    result = TrainResult()
    for epoch in range(plan.epochs):
        opt.lr = plan.lr_at(epoch)
        total = 0.0
        for step in range(steps):
            left, right, y = sampler.sample(plan.batch_size, plan.similar_fraction, rng)
            batch = PairBatch(images[left], images[right], y)
            try:
                total += train_step(model, batch, loss_cfg, opt)
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch + 1}, step {step + 1}: {exc}") from None
        result.steps += steps
        mean = total / steps
        result.history.append(mean)
        logger.info("epoch %d/%d loss %.6f lr %g", epoch + 1, plan.epochs, mean, opt.lr)
        if callback is not None:
            callback(epoch, mean)
    return result
