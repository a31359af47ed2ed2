"""Exhaustive nearest-code search over a gallery of hash records.

Two modes:

* ``hamming`` compares packed binary codes (XOR + popcount per 64-bit word);
* ``l2`` compares continuous embeddings by Euclidean distance.

Results are ordered by ascending distance, ties broken by ascending id.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BadMagicError, ContractError, ShapeError, ShapeMismatchError, \
    TruncatedFileError, VersionMismatchError
from .model import HashCode, n_words, pack_bits, unpack_bits

MODES = ("hamming", "l2")


def hamming_distance(a, b) -> int:
    """Number of differing bits between two codes (HashCode or 0/1 vectors)."""
    a = a if isinstance(a, HashCode) else HashCode.from_bits(a)
    b = b if isinstance(b, HashCode) else HashCode.from_bits(b)
    if a.k != b.k:
        raise ShapeError(f"code lengths differ: {a.k} vs {b.k}")
    return int(np.bitwise_count(np.bitwise_xor(a.words, b.words)).sum())


@dataclass
class HashRecord:
    id: int
    label: int
    embedding: np.ndarray
    code: HashCode

    @property
    def k(self) -> int:
        return self.code.k


@dataclass(frozen=True)
class CodeSet:
    """Column-oriented records: what a codes file holds."""

    ids: np.ndarray        # (N,) uint64-compatible ints
    labels: np.ndarray     # (N,)
    embeddings: np.ndarray  # (N, K) float32
    words: np.ndarray      # (N, ceil(K/64)) uint64
    k: int

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def from_embeddings(cls, ids, labels, embeddings, bits) -> "CodeSet":
        embeddings = np.asarray(embeddings, dtype=np.float32)
        bits = np.asarray(bits)
        if embeddings.ndim != 2 or bits.shape != embeddings.shape:
            raise ShapeError(f"embeddings {embeddings.shape} and bits {bits.shape} must both be N x K")
        return cls(np.asarray(ids, dtype=np.int64), np.asarray(labels, dtype=np.int64),
                   embeddings, pack_bits(bits), embeddings.shape[1])

    @classmethod
    def from_records(cls, records: Sequence[HashRecord]) -> "CodeSet":
        records = list(records)
        if not records:
            raise ContractError("no records given")
        ks = {r.k for r in records} | {len(r.embedding) for r in records}
        if len(ks) != 1:
            raise ShapeError(f"records mix code lengths {sorted(ks)}")
        return cls(
            np.array([r.id for r in records], dtype=np.int64),
            np.array([r.label for r in records], dtype=np.int64),
            np.stack([np.asarray(r.embedding, dtype=np.float32) for r in records]),
            np.stack([r.code.words for r in records]),
            records[0].k,
        )

    def record(self, i: int) -> HashRecord:
        return HashRecord(int(self.ids[i]), int(self.labels[i]), self.embeddings[i],
                          HashCode(self.words[i], self.k))

    def records(self) -> list[HashRecord]:
        return [self.record(i) for i in range(len(self))]

    def bits(self) -> np.ndarray:
        return unpack_bits(self.words, self.k)


class CodeIndex:
    """Immutable exhaustive-scan index over a :class:`CodeSet`."""

    def __init__(self, codes: CodeSet, mode: str = "hamming"):
        if mode not in MODES:
            raise ContractError(f"unknown index mode {mode!r}; expected one of {MODES}")
        if len(codes) == 0:
            raise ContractError("cannot build an empty index")
        if len(np.unique(codes.ids)) != len(codes):
            raise ContractError("duplicate record id in index")
        self.codes = CodeSet(*(np.array(a, copy=True) for a in
                               (codes.ids, codes.labels, codes.embeddings, codes.words)), codes.k)
        self.mode = mode
        self.k = codes.k
        self._embeddings64 = self.codes.embeddings.astype(np.float64)
        for arr in (*vars(self.codes).values(), self._embeddings64):
            if isinstance(arr, np.ndarray):
                arr.setflags(write=False)

    def __len__(self) -> int:
        return len(self.codes)

    def distances(self, probe) -> np.ndarray:
        """Distance from ``probe`` to every record, in storage order."""
        if isinstance(probe, HashRecord):
            probe = probe.code if self.mode == "hamming" else probe.embedding
        if self.mode == "hamming":
            if not isinstance(probe, HashCode):
                probe = HashCode.from_bits(probe)
            if probe.k != self.k:
                raise ShapeError(f"probe has {probe.k} bits, index holds K={self.k}")
            return np.bitwise_count(np.bitwise_xor(self.codes.words, probe.words)).sum(axis=1).astype(np.int64)
        probe = np.asarray(probe, dtype=np.float64)
        if probe.shape != (self.k,):
            raise ShapeError(f"probe has shape {probe.shape}, index holds K={self.k}")
        diff = self._embeddings64 - probe
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def query(self, probe, k: int) -> list[tuple[int, float]]:
        if k < 1:
            raise ContractError(f"k must be at least 1, got {k}")
        d = self.distances(probe)
        order = np.lexsort((self.codes.ids, d))[:k]
        cast = int if self.mode == "hamming" else float
        return [(int(self.codes.ids[i]), cast(d[i])) for i in order]

    def query_positions(self, probe, k: int) -> np.ndarray:
        """Row positions (not ids) of the top-k records."""
        d = self.distances(probe)
        return np.lexsort((self.codes.ids, d))[:k]


def build_index(records: Iterable[HashRecord] | CodeSet, mode: str = "hamming") -> CodeIndex:
    codes = records if isinstance(records, CodeSet) else CodeSet.from_records(list(records))
    return CodeIndex(codes, mode)


def query_topk(index: CodeIndex, probe, k: int) -> list[tuple[int, float]]:
    """Up to ``k`` ``(id, distance)`` pairs, nearest first, ties by ascending id."""
    return index.query(probe, k)


# -- codes file -----------------------------------------------------------------

CODES_MAGIC = b"ASHC"
CODES_VERSION = 1


def write_codes(path, codes: CodeSet) -> None:
    """``ASHC | version u32 | K u32 | count u64 | records``, little endian.

    Each record is ``id u64, label u32, K f32 embedding, ceil(K/64) u64 words``.
    """
    k, w = codes.k, n_words(codes.k)
    record = np.dtype([("id", "<u8"), ("label", "<u4"), ("emb", "<f4", (k,)), ("words", "<u8", (w,))])
    rows = np.zeros(len(codes), dtype=record)
    rows["id"] = codes.ids
    rows["label"] = codes.labels
    rows["emb"] = codes.embeddings
    rows["words"] = codes.words
    header = CODES_MAGIC + struct.pack("<IIQ", CODES_VERSION, k, len(codes))
    Path(path).write_bytes(header + rows.tobytes())


def read_codes(path) -> CodeSet:
    buf = Path(path).read_bytes()
    if buf[:4] != CODES_MAGIC:
        raise BadMagicError(f"{path}: bad magic, not an ASHC codes file")
    if len(buf) < 20:
        raise TruncatedFileError(f"{path}: header truncated")
    version, k, count = struct.unpack("<IIQ", buf[4:20])
    if version != CODES_VERSION:
        raise VersionMismatchError(f"{path}: codes version {version}, expected {CODES_VERSION}")
    if k < 1:
        raise ShapeMismatchError(f"{path}: invalid K={k}")
    w = n_words(k)
    record = np.dtype([("id", "<u8"), ("label", "<u4"), ("emb", "<f4", (k,)), ("words", "<u8", (w,))])
    if len(buf) - 20 < count * record.itemsize:
        raise TruncatedFileError(f"{path}: expected {count} records, file is too short")
    rows = np.frombuffer(buf, dtype=record, count=count, offset=20)
    return CodeSet(rows["id"].astype(np.int64), rows["label"].astype(np.int64),
                   rows["emb"].reshape(count, k).copy(), rows["words"].reshape(count, w).copy(), k)
