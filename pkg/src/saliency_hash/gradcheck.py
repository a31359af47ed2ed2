"""Central finite-difference checks against reverse-mode gradients."""
from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ContractError
from .tensor import Tensor, make_rng, record_branches

logger = logging.getLogger(__name__)

# Widest float the platform offers; on x86-64 this is 80-bit extended precision.
EXTENDED = np.longdouble


def relative_error(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


@dataclass
class CheckResult:
    max_rel_error: float = 0.0
    checked: int = 0
    skipped: list[tuple[str, int]] = field(default_factory=list)
    worst: tuple[str, int] | None = None

    def merge(self, other: "CheckResult") -> "CheckResult":
        if other.max_rel_error > self.max_rel_error:
            self.max_rel_error, self.worst = other.max_rel_error, other.worst
        self.checked += other.checked
        self.skipped.extend(other.skipped)
        return self


def _scalar(value: Tensor):
    if value.size != 1:
        raise ContractError(f"checked function must return a scalar, got shape {value.shape}")
    return value.data.reshape(-1)[0]


def _evaluate(fn: Callable[[], Tensor]):
    with record_branches() as branches:
        value = _scalar(fn())
    return value, branches


def _same_branches(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


@contextlib.contextmanager
def _promoted(params: Mapping[str, Tensor], dtype):
    """Temporarily hold every parameter in ``dtype``."""
    saved = {name: p.data for name, p in params.items()}
    if dtype is not None:
        for p in params.values():
            p.data = p.data.astype(dtype)
    try:
        yield
    finally:
        for name, p in params.items():
            p.data = saved[name]


def check_params(fn: Callable[[], Tensor], params: Mapping[str, Tensor], h: float = 1e-5,
                 max_coords: int | None = None, seed: int = 0,
                 oracle_dtype=None) -> CheckResult:
    """Compare ``backward()`` gradients of ``fn()`` with central differences.

    ``fn`` is re-evaluated after each in-place perturbation of a parameter
    coordinate. With ``max_coords`` set, at most that many coordinates per
    tensor are drawn at random. A coordinate is skipped when ``x - h`` or
    ``x + h`` lands on a different branch of a non-smooth op (a ReLU input
    changing sign, a different max winner) than ``x`` itself, since the
    derivative does not exist across such a kink.

    With ``oracle_dtype`` (e.g. :data:`EXTENDED`) the finite differences are
    evaluated with parameters promoted to that dtype, which lowers the
    roundoff floor of the oracle. Analytic gradients always come from the
    parameters' own dtype.
    """
    for p in params.values():
        p.requires_grad = True
    out = fn()
    out.backward()
    analytic = {name: np.array(p.grad, dtype=np.float64, copy=True) if p.grad is not None
                else np.zeros(p.shape) for name, p in params.items()}

    rng = make_rng(seed)
    result = CheckResult()
    with _promoted(params, oracle_dtype):
        _, base = _evaluate(fn)
        for name, p in params.items():
            flat = p.data.reshape(-1)
            coords = np.arange(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
            a_flat = analytic[name].reshape(-1)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + h
                f_plus, b_plus = _evaluate(fn)
                flat[i] = orig - h
                f_minus, b_minus = _evaluate(fn)
                flat[i] = orig
                if not (_same_branches(base, b_plus) and _same_branches(base, b_minus)):
                    result.skipped.append((name, int(i)))
                    continue
                numeric = np.float64((f_plus - f_minus) / (2 * h))
                err = float(relative_error(np.float64(a_flat[i]), numeric))
                result.checked += 1
                if err > result.max_rel_error:
                    result.max_rel_error, result.worst = err, (name, int(i))
    if result.skipped:
        logger.debug("skipped %d coordinates straddling a kink", len(result.skipped))
    return result


def finite_diff_check(fn: Callable[[Tensor], Tensor], point: Tensor, h: float = 1e-5,
                      oracle_dtype=None) -> float:
    """Maximum relative error between analytic and central-difference gradients.

    ``fn`` maps a tensor to a scalar tensor and must be pure. The relative
    error of each coordinate uses ``max(|a|, |b|, 1e-8)`` as denominator.
    """
    x = Tensor(np.array(point.data, copy=True), requires_grad=True)
    return check_params(lambda: fn(x), {"x": x}, h=h, oracle_dtype=oracle_dtype).max_rel_error
