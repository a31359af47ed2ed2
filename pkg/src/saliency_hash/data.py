"""Image datasets: 8-bit PGM/PPM files listed in a CSV manifest.

A manifest has the header ``path,label`` (optionally a third ``id`` column)
with paths relative to the manifest's directory.

The synthetic generator produces the "similar overall, subtle local" setting:
every image is smoothed noise from one shared distribution, and each class
adds a fixed small patch that is brighter (even classes) or darker (odd
classes) than the background.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ContractError, DataError
from .tensor import make_rng

DATA_ROOT_ENV = "SALIENCY_HASH_DATA"
BACKGROUND_MEAN = 0.5
BACKGROUND_STD = 0.1


def default_data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "data"))


# -- netpbm ---------------------------------------------------------------------

def write_netpbm(path, pixels: np.ndarray) -> None:
    """Write C x H x W values in [0, 1] as binary PGM (C=1) or PPM (C=3)."""
    pixels = np.asarray(pixels)
    c, h, w = pixels.shape
    if c not in (1, 3):
        raise ContractError(f"netpbm supports 1 or 3 channels, got {c}")
    raw = np.clip(np.rint(pixels * 255), 0, 255).astype(np.uint8)
    magic = b"P5" if c == 1 else b"P6"
    body = raw.transpose(1, 2, 0).tobytes()
    Path(path).write_bytes(magic + f"\n{w} {h}\n255\n".encode() + body)


def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError("truncated netpbm header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte precedes the raster


def read_netpbm(path) -> np.ndarray:
    """C x H x W float32 pixels scaled to [0, 1] from an 8-bit P5/P6 file."""
    buf = Path(path).read_bytes()
    if buf[:2] not in (b"P5", b"P6"):
        raise DataError(f"{path}: unsupported image format (expected binary PGM/PPM)")
    tokens, pos = _header_tokens(buf, 4)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise DataError(f"{path}: malformed netpbm header") from None
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit images are supported (maxval {maxval})")
    c = 1 if tokens[0] == b"P5" else 3
    raster = np.frombuffer(buf, dtype=np.uint8, count=h * w * c, offset=pos) \
        if len(buf) - pos >= h * w * c else None
    if raster is None:
        raise DataError(f"{path}: truncated raster")
    return (raster.reshape(h, w, c).transpose(2, 0, 1) / np.float32(255)).astype(np.float32)


# -- manifests -------------------------------------------------------------------

@dataclass
class ManifestEntry:
    path: str
    label: str
    id: int | None = None


def write_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    with_ids = any(e.id is not None for e in entries)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "label", "id"] if with_ids else ["path", "label"])
        for e in entries:
            writer.writerow([e.path, e.label, e.id] if with_ids else [e.path, e.label])


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0][:2]] != ["path", "label"]:
        raise DataError(f"{path}:1: manifest header must start with 'path,label'")
    has_id = len(rows[0]) > 2 and rows[0][2].strip() == "id"
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(rows[0]) or not row[0].strip():
            raise DataError(f"{path}:{lineno}: malformed manifest line {row!r}")
        ident = None
        if has_id:
            try:
                ident = int(row[2])
            except ValueError:
                raise DataError(f"{path}:{lineno}: id {row[2]!r} is not an integer") from None
        entries.append(ManifestEntry(row[0].strip(), row[1].strip(), ident))
    return entries


def _sorted_labels(labels: Sequence[str]) -> list[str]:
    unique = set(labels)
    try:
        return sorted(unique, key=int)
    except ValueError:
        return sorted(unique)


@dataclass
class Dataset:
    images: np.ndarray  # (N, C, H, W) float32 in [0, 1]
    labels: np.ndarray  # (N,) dense ints 0..C-1
    ids: np.ndarray
    paths: list[str] = field(default_factory=list)
    class_names: list[str] = field(default_factory=list)
    standardize: bool = False

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def model_inputs(self, stats: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
        """Images as fed to the network; per-channel standardized when flagged."""
        if not self.standardize:
            return self.images
        mean, std = stats or self.channel_stats()
        return (self.images - mean[None, :, None, None]) / std[None, :, None, None]

    def channel_stats(self) -> tuple[np.ndarray, np.ndarray]:
        return self.images.mean(axis=(0, 2, 3)), self.images.std(axis=(0, 2, 3)) + 1e-8


def load_dataset(manifest, standardize: bool = False) -> Dataset:
    """Decode every manifest entry; labels are mapped densely in sorted order."""
    manifest = Path(manifest)
    entries = read_manifest(manifest)
    if not entries:
        raise DataError(f"{manifest}: manifest lists no images")
    names = _sorted_labels([e.label for e in entries])
    index = {name: i for i, name in enumerate(names)}
    images = []
    for e in entries:
        p = manifest.parent / e.path
        if not p.is_file():
            raise DataError(f"image not found: {p}")
        images.append(read_netpbm(p))
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise DataError(f"{manifest}: images have differing shapes {sorted(shapes)}")
    ids = [e.id if e.id is not None else i for i, e in enumerate(entries)]
    return Dataset(
        images=np.stack(images),
        labels=np.array([index[e.label] for e in entries], dtype=np.int64),
        ids=np.array(ids, dtype=np.int64),
        paths=[e.path for e in entries],
        class_names=names,
        standardize=standardize,
    )


def split_manifest(manifest, seed: int = 0, fraction: float = 0.1,
                   out_dir=None) -> tuple[Path, Path]:
    """Hold out ``floor(fraction * n_c)`` (at least 1) items per class as queries.

    Writes ``gallery.csv`` and ``query.csv`` (with an ``id`` column carrying
    the original manifest position) next to the manifest or in ``out_dir``,
    which must be the manifest directory or share its relative image paths.
    """
    manifest = Path(manifest)
    entries = read_manifest(manifest)
    out_dir = Path(out_dir) if out_dir else manifest.parent
    rng = make_rng((seed, 2))
    by_class: dict[str, list[int]] = {}
    for i, e in enumerate(entries):
        by_class.setdefault(e.label, []).append(i)
    query = set()
    for label in _sorted_labels(list(by_class)):
        members = by_class[label]
        n_query = max(1, int(fraction * len(members)))
        if n_query >= len(members):
            raise DataError(f"class {label!r} has too few items ({len(members)}) to split")
        query.update(members[i] for i in rng.permutation(len(members))[:n_query])
    rel = os.path.relpath(manifest.parent, out_dir)

    def entry(i):
        e = entries[i]
        path = e.path if rel == "." else os.path.join(rel, e.path)
        return ManifestEntry(path, e.label, e.id if e.id is not None else i)

    gallery_path, query_path = out_dir / "gallery.csv", out_dir / "query.csv"
    write_manifest(gallery_path, [entry(i) for i in range(len(entries)) if i not in query])
    write_manifest(query_path, [entry(i) for i in sorted(query)])
    return gallery_path, query_path


# -- synthetic data ---------------------------------------------------------------

@dataclass
class SyntheticSpec:
    classes: int = 4
    per_class: int = 280
    shape: tuple[int, int, int] = (3, 32, 32)
    smoothing: float = 1.5
    patch: int = 6
    contrast: float = 0.25
    seed: int = 7
    counts: tuple[int, ...] | None = None  # per-class sizes; overrides per_class

    def class_counts(self) -> list[int]:
        if self.counts is not None:
            return [int(c) for c in self.counts]
        return [self.per_class] * self.classes

    def validate(self) -> "SyntheticSpec":
        c, h, w = self.shape
        if self.classes < 2:
            raise ContractError("need at least two classes")
        if self.counts is not None and len(self.counts) != self.classes:
            raise ContractError(f"{len(self.counts)} class counts given for {self.classes} classes")
        if min(self.class_counts()) < 1:
            raise ContractError("every class needs at least one image")
        if not 0 < self.patch <= min(h, w):
            raise ContractError(f"patch {self.patch} does not fit a {h}x{w} image")
        if not 0 < self.contrast < 1:
            raise ContractError(f"contrast must lie in (0, 1), got {self.contrast}")
        if c not in (1, 3):
            raise ContractError("images must have 1 or 3 channels")
        return self


def patch_layout(spec: SyntheticSpec) -> list[tuple[int, int]]:
    """Top-left corner of each class patch; non-overlapping when space allows."""
    _, h, w = spec.shape
    rng = make_rng((spec.seed, 0))
    corners: list[tuple[int, int]] = []
    for _ in range(spec.classes):
        for _attempt in range(1000):
            top, left = int(rng.integers(h - spec.patch + 1)), int(rng.integers(w - spec.patch + 1))
            if all(abs(top - t) >= spec.patch or abs(left - l) >= spec.patch for t, l in corners):
                break
        corners.append((top, left))
    return corners


def class_contrast(label: int, contrast: float) -> float:
    return contrast if label % 2 == 0 else -contrast


def synthesize_image(spec: SyntheticSpec, label: int, image_id: int,
                     corner: tuple[int, int]) -> np.ndarray:
    """One C x H x W image in [0, 1]; its noise depends only on (seed, image_id).

    The salient patch is drawn on channel 0 only, so each class shifts the
    global image mean by at most ``contrast * patch**2 / (C * H * W)``.
    """
    c, h, w = spec.shape
    rng = make_rng((spec.seed, 1, image_id))
    noise = rng.standard_normal((c, h, w))
    smooth = gaussian_filter(noise, sigma=(0, spec.smoothing, spec.smoothing), mode="wrap")
    centered = smooth - smooth.mean(axis=(1, 2), keepdims=True)
    scaled = centered / (centered.std(axis=(1, 2), keepdims=True) + 1e-12)
    img = BACKGROUND_MEAN + BACKGROUND_STD * scaled
    top, left = corner
    img[0, top:top + spec.patch, left:left + spec.patch] += class_contrast(label, spec.contrast)
    return np.clip(img, 0.0, 1.0)


def gen_synthetic(spec: SyntheticSpec, out_dir) -> Path:
    """Write images under ``out_dir/images`` and return ``out_dir/manifest.csv``."""
    spec.validate()
    out_dir = Path(out_dir)
    try:
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out_dir}: {exc}") from None
    ext = "pgm" if spec.shape[0] == 1 else "ppm"
    corners = patch_layout(spec)
    entries = []
    image_id = 0
    for label, count in enumerate(spec.class_counts()):
        for _ in range(count):
            rel = f"images/{image_id:06d}.{ext}"
            write_netpbm(out_dir / rel, synthesize_image(spec, label, image_id, corners[label]))
            entries.append(ManifestEntry(rel, str(label)))
            image_id += 1
    manifest = out_dir / "manifest.csv"
    write_manifest(manifest, entries)
    return manifest
