"""Retrieval quality at a cutoff k: hit ratio, average precision, reciprocal rank.

A returned list is scored through its binary relevance flags (1 = same class
as the query). Every metric lies in [0, 1].
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .index import CodeIndex, CodeSet

AP_NORMALIZATIONS = ("retrieved", "min_k_total")


def _top(rels, k: int) -> np.ndarray:
    if k < 1:
        raise ContractError(f"k must be at least 1, got {k}")
    return np.asarray(rels, dtype=np.float64)[:k]


def hr_at_k(rels, k: int) -> float:
    """Fraction of the top-k that is relevant.

    >>> hr_at_k([1, 1, 0, 0, 0], 5)
    0.4
    """
    return float(_top(rels, k).sum() / k)


def ap_at_k(rels, k: int, normalization: str = "retrieved", total_relevant: int | None = None) -> float:
    """Average of precision@i over the relevant ranks i <= k.

    The sum is divided by the number of relevant items retrieved in the top-k
    (``normalization="retrieved"``) or by ``min(k, total_relevant)``
    (``"min_k_total"``). A list without relevant items scores 0.

    >>> round(ap_at_k([1, 0, 1, 0, 0], 5), 6)
    0.833333
    """
    r = _top(rels, k)
    hits = r.sum()
    if hits == 0:
        return 0.0
    precision = np.cumsum(r) / np.arange(1, len(r) + 1)
    if normalization == "retrieved":
        denom = hits
    elif normalization == "min_k_total":
        if total_relevant is None:
            raise ContractError("min_k_total normalization needs total_relevant")
        denom = min(k, total_relevant)
    else:
        raise ContractError(f"unknown AP normalization {normalization!r}")
    return float((precision * r).sum() / denom)


def rr_at_k(rels, k: int) -> float:
    """Reciprocal 1-based rank of the first relevant item, 0 if none in the top-k."""
    hits = np.flatnonzero(_top(rels, k))
    return 1.0 / (hits[0] + 1) if hits.size else 0.0


@dataclass
class MetricsReport:
    k: int
    mode: str
    query_ids: np.ndarray
    query_labels: np.ndarray
    hr: np.ndarray
    ap: np.ndarray
    rr: np.ndarray
    class_counts: dict[int, int] = field(default_factory=dict)

    @property
    def mHR(self) -> float:
        return float(self.hr.mean())

    @property
    def mAP(self) -> float:
        return float(self.ap.mean())

    @property
    def mRR(self) -> float:
        return float(self.rr.mean())

    def __eq__(self, other):
        if not isinstance(other, MetricsReport):
            return NotImplemented
        return (self.k == other.k and self.mode == other.mode
                and self.class_counts == other.class_counts
                and all(np.array_equal(getattr(self, a), getattr(other, a))
                        for a in ("query_ids", "query_labels", "hr", "ap", "rr")))

    def as_dict(self) -> dict[str, float | int | str]:
        out: dict[str, float | int | str] = {
            "k": self.k, "mode": self.mode, "queries": len(self.hr),
            "mHR": self.mHR, "mAP": self.mAP, "mRR": self.mRR,
        }
        for label, count in sorted(self.class_counts.items()):
            out[f"queries_class_{label}"] = count
        return out

    def to_kv(self) -> str:
        return "\n".join(f"{key} = {value:.6f}" if isinstance(value, float) else f"{key} = {value}"
                         for key, value in self.as_dict().items())

    def to_table(self) -> str:
        rows = [("class", "queries", "mHR", "mAP", "mRR")]
        for label in sorted(self.class_counts):
            m = self.query_labels == label
            rows.append((str(label), str(int(m.sum())), f"{self.hr[m].mean():.4f}",
                         f"{self.ap[m].mean():.4f}", f"{self.rr[m].mean():.4f}"))
        rows.append(("all", str(len(self.hr)), f"{self.mHR:.4f}", f"{self.mAP:.4f}", f"{self.mRR:.4f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        lines = [f"top-{self.k} retrieval ({self.mode})"]
        lines += ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in rows]
        return "\n".join(lines)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["query_id", "class", "hr", "ap", "rr"])
            for row in zip(self.query_ids, self.query_labels, self.hr, self.ap, self.rr):
                writer.writerow([int(row[0]), int(row[1]), *(f"{v:.6f}" for v in row[2:])])


def evaluate(index: CodeIndex, queries: CodeSet, k: int = 10,
             ap_normalization: str = "retrieved") -> MetricsReport:
    """Query every record of ``queries`` against ``index`` and score by label match."""
    if len(queries) == 0:
        raise ContractError("empty query set")
    if ap_normalization not in AP_NORMALIZATIONS:
        raise ContractError(f"unknown AP normalization {ap_normalization!r}")
    gallery_labels = index.codes.labels
    total_per_class = Counter(gallery_labels.tolist())
    hr, ap, rr = (np.zeros(len(queries)) for _ in range(3))
    for q in range(len(queries)):
        probe = queries.record(q)
        top = index.query_positions(probe, k)
        rels = (gallery_labels[top] == probe.label).astype(np.float64)
        hr[q] = hr_at_k(rels, k)
        ap[q] = ap_at_k(rels, k, ap_normalization, total_per_class.get(probe.label, 0))
        rr[q] = rr_at_k(rels, k)
    counts = Counter(int(v) for v in queries.labels)
    return MetricsReport(k, index.mode, np.asarray(queries.ids), np.asarray(queries.labels),
                         hr, ap, rr, dict(sorted(counts.items())))
