"""Datasets: IDX ingestion, class subsetting, corpus merging, synthetic corpora."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from ganinv.errors import DataError, ShapeError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IDXError(DataError):
    pass


class IDXMagicError(IDXError):
    pass


class IDXCountError(IDXError):
    pass


class IDXTruncatedError(IDXError):
    pass


@dataclass(frozen=True)
class Dataset:
    """Labelled collection of flattened images.

    ``origin`` has one row ``(source, index)`` per item pointing into
    ``sources`` and the item's position in that source; ``orig_labels`` is
    the label the item had there.  Together they let any subset or merge be
    traced back to the raw files.
    """

    images: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    class_names: tuple
    image_shape: tuple
    sources: tuple = ()
    transforms: tuple = ()
    origin: np.ndarray = None
    orig_labels: np.ndarray = None
    value_range: str = "unit"

    def __post_init__(self):
        n = len(self.images)
        if self.images.ndim != 2:
            raise ShapeError("images must be a (count, features) array")
        if len(self.labels) != n:
            raise DataError(f"{n} images but {len(self.labels)} labels")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DataError("label outside the class range")
        if int(np.prod(self.image_shape)) != self.images.shape[1]:
            raise ShapeError(f"image shape {self.image_shape} vs {self.images.shape[1]} features")
        if self.value_range == "unit" and n and (self.images.min() < 0 or self.images.max() > 1):
            raise DataError("pixel values must lie in [0, 1]")
        if self.origin is None:
            object.__setattr__(self, "origin", np.stack([np.zeros(n, np.int64), np.arange(n)], 1))
        if self.orig_labels is None:
            object.__setattr__(self, "orig_labels", self.labels.copy())

    def __len__(self):
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_features(self) -> int:
        return self.images.shape[1]

    def of_class(self, k: int) -> np.ndarray:
        return self.images[self.labels == k]

    def onehot(self) -> np.ndarray:
        return np.eye(self.n_classes)[self.labels]


def empty_dataset(image_shape) -> Dataset:
    d = int(np.prod(image_shape))
    return Dataset(np.zeros((0, d)), np.zeros(0, np.int64), (), tuple(image_shape))


# ---------------------------------------------------------------------- IDX


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _idx_header(raw, path, magic, ndim):
    need = 4 + 4 * ndim
    if len(raw) < need:
        raise IDXTruncatedError(f"{path}: file too short for an IDX header")
    (found,) = struct.unpack_from(">I", raw, 0)
    if found != magic:
        raise IDXMagicError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack_from(">" + "I" * ndim, raw, 4)
    body = raw[need:]
    if len(body) < int(np.prod(dims)):
        raise IDXTruncatedError(f"{path}: payload has {len(body)} bytes, header promises {np.prod(dims)}")
    return dims, body


def load_idx(images_path, labels_path, class_names=None) -> Dataset:
    """Read an IDX image/label file pair (optionally gzipped); pixels / 255."""
    raw_img = _read(images_path)
    raw_lab = _read(labels_path)
    (n, rows, cols), body = _idx_header(raw_img, images_path, IDX_IMAGES_MAGIC, 3)
    (m,), lab_body = _idx_header(raw_lab, labels_path, IDX_LABELS_MAGIC, 1)
    if n != m:
        raise IDXCountError(f"{n} images in {images_path} but {m} labels in {labels_path}")
    pixels = np.frombuffer(body, dtype=np.uint8, count=n * rows * cols).reshape(n, rows * cols)
    labels = np.frombuffer(lab_body, dtype=np.uint8, count=n).astype(np.int64)
    k = int(labels.max()) + 1 if n else 0
    names = tuple(class_names) if class_names else tuple(str(i) for i in range(k))
    return Dataset(
        pixels.astype(np.float64) / 255.0,
        labels,
        names,
        (rows, cols),
        sources=(f"idx:{images_path}",),
        transforms=("scale /255",),
    )


def to_bytes_255(images) -> np.ndarray:
    """Inverse of the /255 load scaling for quantized data."""
    return np.rint(np.asarray(images) * 255.0).astype(np.uint8)


def write_idx(images_u8, labels, images_path, labels_path) -> None:
    """Write an IDX pair; used for fixtures and corpus export."""
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    n, rows, cols = images_u8.shape
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, rows, cols))
        fh.write(images_u8.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        fh.write(np.asarray(labels, dtype=np.uint8).tobytes())


# --------------------------------------------------------- subset and merge


def subset_classes(d: Dataset, keep, relabel=True) -> Dataset:
    keep = [int(k) for k in keep]
    if not keep:
        raise DataError("keep must name at least one class")
    unknown = [k for k in keep if not 0 <= k < d.n_classes]
    if unknown:
        raise DataError(f"unknown classes {unknown} (dataset has {d.n_classes})")
    mask = np.isin(d.labels, keep)
    labels = d.labels[mask]
    if relabel:
        remap = np.full(d.n_classes, -1, dtype=np.int64)
        remap[keep] = np.arange(len(keep))
        labels = remap[labels]
        names = tuple(d.class_names[k] for k in keep)
    else:
        names = d.class_names
    return replace(
        d,
        images=d.images[mask],
        labels=labels,
        class_names=names,
        transforms=d.transforms + (f"subset {keep} relabel={bool(relabel)}",),
        origin=d.origin[mask],
        orig_labels=d.orig_labels[mask],
    )


def merge(d1: Dataset, d2: Dataset) -> Dataset:
    """Concatenate two corpora; ``d2``'s classes come after ``d1``'s."""
    if d1.n_features != d2.n_features:
        raise ShapeError(f"cannot merge {d1.image_shape} images with {d2.image_shape}")
    if len(d2) == 0 and d2.n_classes == 0:
        return d1
    origin2 = d2.origin.copy()
    origin2[:, 0] += len(d1.sources)
    return Dataset(
        np.concatenate([d1.images, d2.images]),
        np.concatenate([d1.labels, d2.labels + d1.n_classes]),
        d1.class_names + d2.class_names,
        d1.image_shape,
        sources=d1.sources + d2.sources,
        transforms=d1.transforms + d2.transforms + (f"merge offset={d1.n_classes}",),
        origin=np.concatenate([d1.origin, origin2]),
        orig_labels=np.concatenate([d1.orig_labels, d2.orig_labels]),
        value_range=d1.value_range,
    )


# ---------------------------------------------------------------- synthetic


def _circle(r=0.3, n=24):
    t = np.linspace(0, 2 * np.pi, n + 1)
    return [list(zip(0.5 + r * np.cos(t), 0.5 + r * np.sin(t)))]


# strokes in unit coordinates, y pointing down
GLYPHS = {
    "vbar": [[(0.5, 0.2), (0.5, 0.8)]],
    "hbar": [[(0.2, 0.5), (0.8, 0.5)]],
    "plus": [[(0.5, 0.2), (0.5, 0.8)], [(0.2, 0.5), (0.8, 0.5)]],
    "cross": [[(0.22, 0.22), (0.78, 0.78)], [(0.78, 0.22), (0.22, 0.78)]],
    "box": [[(0.22, 0.22), (0.78, 0.22), (0.78, 0.78), (0.22, 0.78), (0.22, 0.22)]],
    "slash": [[(0.75, 0.2), (0.25, 0.8)]],
    "backslash": [[(0.25, 0.2), (0.75, 0.8)]],
    "ring": _circle(),
    "triangle": [[(0.5, 0.2), (0.8, 0.78), (0.2, 0.78), (0.5, 0.2)]],
    "ell": [[(0.3, 0.2), (0.3, 0.78), (0.75, 0.78)]],
    "tee": [[(0.2, 0.22), (0.8, 0.22)], [(0.5, 0.22), (0.5, 0.8)]],
    "aitch": [[(0.28, 0.2), (0.28, 0.8)], [(0.72, 0.2), (0.72, 0.8)], [(0.28, 0.5), (0.72, 0.5)]],
    "zed": [[(0.22, 0.22), (0.78, 0.22), (0.22, 0.78), (0.78, 0.78)]],
    "vee": [[(0.2, 0.2), (0.5, 0.8), (0.8, 0.2)]],
    "cup": [[(0.25, 0.2), (0.25, 0.78), (0.75, 0.78), (0.75, 0.2)]],
    "pillars": [[(0.35, 0.2), (0.35, 0.8)], [(0.65, 0.2), (0.65, 0.8)]],
    "equals": [[(0.2, 0.38), (0.8, 0.38)], [(0.2, 0.62), (0.8, 0.62)]],
    "diamond": [[(0.5, 0.18), (0.82, 0.5), (0.5, 0.82), (0.18, 0.5), (0.5, 0.18)]],
    "chevron": [[(0.3, 0.2), (0.75, 0.5), (0.3, 0.8)]],
    "en": [[(0.25, 0.8), (0.25, 0.2), (0.75, 0.8), (0.75, 0.2)]],
    "ee": [[(0.72, 0.2), (0.28, 0.2), (0.28, 0.8), (0.72, 0.8)], [(0.28, 0.5), (0.65, 0.5)]],
    "hash": [
        [(0.38, 0.2), (0.38, 0.8)],
        [(0.62, 0.2), (0.62, 0.8)],
        [(0.2, 0.38), (0.8, 0.38)],
        [(0.2, 0.62), (0.8, 0.62)],
    ],
    "wye": [[(0.2, 0.2), (0.5, 0.5), (0.8, 0.2)], [(0.5, 0.5), (0.5, 0.8)]],
    "dot_ring": _circle(0.15, 16),
}
GLYPH_NAMES = tuple(GLYPHS)


def _segment_distance(px, py, a, b):
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / denom, 0.0, 1.0) if denom else 0.0
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def render_glyph(strokes, size, thickness) -> np.ndarray:
    """Anti-aliased rasterization of polylines onto a ``size`` x ``size`` grid."""
    c = (np.arange(size) + 0.5) / size
    py, px = np.meshgrid(c, c, indexing="ij")
    dist = np.full((size, size), np.inf)
    for line in strokes:
        for a, b in zip(line[:-1], line[1:]):
            dist = np.minimum(dist, _segment_distance(px, py, a, b))
    pixel = 1.0 / size
    return np.clip((thickness / 2 + pixel / 2 - dist) / pixel, 0.0, 1.0)


def synth_glyphs(class_count, per_class, size=16, seed=0, first_shape=0) -> Dataset:
    """Procedural glyph corpus: each class is one stroke shape with seeded jitter.

    ``first_shape`` selects which block of the shape table is used, so two
    disjoint corpora can be drawn (e.g. shapes 0-9 and 10-19).
    """
    if class_count < 1 or per_class < 1 or size < 4:
        raise DataError("class_count, per_class must be positive and size >= 4")
    if first_shape + class_count > len(GLYPH_NAMES):
        raise DataError(
            f"only {len(GLYPH_NAMES)} glyph shapes exist; asked for {first_shape}..{first_shape + class_count - 1}"
        )
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for k in range(class_count):
        strokes = GLYPHS[GLYPH_NAMES[first_shape + k]]
        for _ in range(per_class):
            scale = rng.uniform(0.85, 1.05)
            angle = rng.uniform(-0.15, 0.15)
            shift = rng.uniform(-0.06, 0.06, size=2)
            thick = rng.uniform(0.07, 0.11)
            gain = rng.uniform(0.85, 1.0)
            cos, sin = np.cos(angle), np.sin(angle)

            def warp(p):
                x, y = p[0] - 0.5, p[1] - 0.5
                return (
                    0.5 + shift[0] + scale * (cos * x - sin * y),
                    0.5 + shift[1] + scale * (sin * x + cos * y),
                )

            moved = [[warp(p) for p in line] for line in strokes]
            images.append(gain * render_glyph(moved, size, thick).reshape(-1))
            labels.append(k)
    names = tuple(GLYPH_NAMES[first_shape : first_shape + class_count])
    return Dataset(
        np.array(images),
        np.array(labels, dtype=np.int64),
        names,
        (size, size),
        sources=(f"synth_glyphs(classes={class_count}, per_class={per_class}, size={size}, seed={seed}, first={first_shape})",),
    )


def synth_modes(modes, n, sigma, seed=0) -> Dataset:
    """``n`` 2-D points, mode index drawn uniformly, isotropic Gaussian noise."""
    modes = np.asarray(modes, dtype=np.float64)
    if n < 1 or len(modes) < 1:
        raise DataError("need at least one mode and one sample")
    rng = np.random.default_rng(seed)
    labels = rng.integers(len(modes), size=n)
    points = modes[labels] + sigma * rng.standard_normal((n, modes.shape[1]))
    return Dataset(
        points,
        labels.astype(np.int64),
        tuple(f"mode{k}" for k in range(len(modes))),
        (modes.shape[1],),
        sources=(f"synth_modes(n={n}, sigma={sigma}, seed={seed})",),
        value_range="real",
    )
