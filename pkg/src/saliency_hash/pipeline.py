"""End-to-end runs: train on a gallery, encode, index, evaluate on queries.

Run configuration files are plain ``key = value`` lines (``#`` starts a
comment)::

    arch = U
    k = 12
    r = 0.5
    lr = 0.01
    epochs = 50
    batch = 10
    seed = 7
    data = data/gallery.csv
    out = runs/ash_u.ckpt
    attention = on
    head = sigmoid
    distance = squared_l2
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import Dataset
from .errors import ContractError, DataError
from .index import CodeIndex, CodeSet
from .metrics import MetricsReport, evaluate
from .model import AshConfig, HashModel, binarize, build_model, default_thresholds, encode_batch
from .tensor import make_rng
from .training import LossConfig, TrainPlan, train

logger = logging.getLogger(__name__)


def _parse_bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("on", "true", "yes", "1"):
        return True
    if v in ("off", "false", "no", "0"):
        return False
    raise ContractError(f"expected on/off, got {value!r}")


@dataclass
class RunConfig:
    arch: str = "U"
    k: int = 12
    r: float = 0.5
    lr: float = 0.01
    epochs: int = 50
    batch: int = 10
    seed: int = 7
    data: str = ""
    out: str = ""
    attention: bool = True
    head: str = "sigmoid"
    distance: str = "squared_l2"
    widths: tuple[int, ...] | None = None
    input_shape: tuple[int, int, int] = (3, 32, 32)
    thresholds: tuple[float, ...] | None = None

    def model_config(self) -> AshConfig:
        return AshConfig(arch=self.arch, k=self.k, input_shape=self.input_shape, widths=self.widths,
                         head_activation=self.head, attention=self.attention, seed=self.seed)

    def plan(self) -> TrainPlan:
        return TrainPlan(epochs=self.epochs, batch_size=self.batch, seed=self.seed, lr=self.lr)

    def loss_config(self) -> LossConfig:
        return LossConfig(r=self.r, k=self.k, distance=self.distance)

    def updated(self, **overrides) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})

    def to_text(self) -> str:
        lines = []
        for key, value in asdict(self).items():
            if value is None:
                continue
            if isinstance(value, bool):
                value = "on" if value else "off"
            elif isinstance(value, (tuple, list)):
                value = ",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


_INT_TUPLES = {"widths", "input_shape"}


def coerce_field(key: str, raw: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    if key not in types:
        raise ContractError(f"unknown run-config key {key!r}")
    raw = raw.strip()
    if key in _INT_TUPLES:
        return tuple(int(v) for v in raw.replace("x", ",").split(",") if v.strip())
    if key == "thresholds":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if key == "attention":
        return _parse_bool(raw)
    if key in ("k", "epochs", "batch", "seed"):
        return int(raw)
    if key in ("r", "lr"):
        return float(raw)
    return raw


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        try:
            values[key] = coerce_field(key, raw)
        except (ContractError, ValueError) as exc:
            raise DataError(f"{source}:{lineno}: {exc}") from None
    return RunConfig(**values)


def read_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"run config not found: {path}")
    return parse_run_config(path.read_text(encoding="utf-8"), str(path))


def sidecar_path(checkpoint) -> Path:
    """The run config saved next to a checkpoint."""
    return Path(str(checkpoint) + ".cfg")


def save_run(model: HashModel, cfg: RunConfig, checkpoint) -> None:
    save_checkpoint(model, checkpoint)
    sidecar_path(checkpoint).write_text(cfg.to_text(), encoding="utf-8")


def load_run(checkpoint, cfg: RunConfig | None = None) -> tuple[HashModel, RunConfig]:
    if cfg is None:
        cfg = read_run_config(sidecar_path(checkpoint))
    return load_checkpoint(checkpoint, cfg.model_config()), cfg


def thresholds_for(cfg: RunConfig, train_embeddings: np.ndarray | None = None) -> np.ndarray:
    if cfg.thresholds is not None:
        return np.asarray(cfg.thresholds, dtype=np.float64)
    return default_thresholds(cfg.head, cfg.k, train_embeddings)


def encode_dataset(model: HashModel, dataset: Dataset, thresholds: np.ndarray,
                   stats=None) -> CodeSet:
    """Codes for every image; ``stats`` are the gallery's channel statistics
    when the dataset is flagged for standardization."""
    embeddings = encode_batch(model, dataset.model_inputs(stats), mode="eval")
    return CodeSet.from_embeddings(dataset.ids, dataset.labels, embeddings,
                                   binarize(embeddings, thresholds))


def train_run(cfg: RunConfig, gallery: Dataset, callback=None) -> tuple[HashModel, RunConfig, list[float]]:
    """Build, train and (for non-sigmoid heads) fit binarization thresholds."""
    cfg = replace(cfg, input_shape=tuple(gallery.images.shape[1:]))
    model = build_model(cfg.model_config())
    result = train(model, gallery.model_inputs(), gallery.labels, cfg.plan(), cfg.loss_config(),
                   callback=callback)
    if cfg.head != "sigmoid" and cfg.thresholds is None:
        medians = default_thresholds(cfg.head, cfg.k,
                                     encode_batch(model, gallery.model_inputs(), mode="eval"))
        cfg = replace(cfg, thresholds=tuple(float(t) for t in medians))
    return model, cfg, result.history


@dataclass
class ExperimentResult:
    model: HashModel
    config: RunConfig
    history: list[float]
    report: MetricsReport
    gallery_codes: CodeSet
    query_codes: CodeSet


def run_experiment(cfg: RunConfig, gallery: Dataset, queries: Dataset, topk: int = 10,
                   mode: str = "l2", ap_normalization: str = "retrieved",
                   callback=None) -> ExperimentResult:
    model, cfg, history = train_run(cfg, gallery, callback)
    tau = thresholds_for(cfg)
    stats = gallery.channel_stats() if gallery.standardize else None
    g_codes = encode_dataset(model, gallery, tau, stats)
    q_codes = encode_dataset(model, queries, tau, stats)
    report = evaluate(CodeIndex(g_codes, mode), q_codes, topk, ap_normalization)
    return ExperimentResult(model, cfg, history, report, g_codes, q_codes)


def random_code_baseline(gallery: Dataset, queries: Dataset, k: int = 12, topk: int = 10,
                         mode: str = "l2", seed: int = 0) -> MetricsReport:
    """Metrics for codes drawn uniformly at random, independent of the images."""
    rng = make_rng((seed, 3))
    g_emb = rng.random((len(gallery), k)).astype(np.float32)
    q_emb = rng.random((len(queries), k)).astype(np.float32)
    g = CodeSet.from_embeddings(gallery.ids, gallery.labels, g_emb, binarize(g_emb, 0.5))
    q = CodeSet.from_embeddings(queries.ids, queries.labels, q_emb, binarize(q_emb, 0.5))
    return evaluate(CodeIndex(g, mode), q, topk)


def sweep(base: RunConfig, gallery: Dataset, queries: Dataset, rs, ks, topk: int = 10,
          mode: str = "l2") -> list[tuple[float, int, float]]:
    """mAP@topk for every (r, K) cell, rows ordered by r then K."""
    rows = []
    for r in rs:
        for k in ks:
            result = run_experiment(replace(base, r=float(r), k=int(k)), gallery, queries, topk, mode)
            logger.info("sweep r=%g K=%d mAP=%.4f", r, k, result.report.mAP)
            rows.append((float(r), int(k), result.report.mAP))
    return rows


def format_sweep_table(rows, topk: int = 10) -> str:
    rs = sorted({r for r, _, _ in rows})
    ks = sorted({k for _, k, _ in rows})
    cell = {(r, k): m for r, k, m in rows}
    header = ["r"] + [f"K={k}" for k in ks]
    lines = [f"mAP@{topk}", "  ".join(h.rjust(8) for h in header)]
    for r in rs:
        lines.append("  ".join([f"{r:8.2f}"] + [f"{cell[(r, k)]:8.4f}" for k in ks]))
    return "\n".join(lines)


def write_sweep_csv(path, rows) -> None:
    with open(path, "w") as fh:
        fh.write("r,k,map\n")
        for r, k, m in rows:
            fh.write(f"{r:g},{k},{m:.6f}\n")
