"""Output files: PGM image grids, CSV tables and key-value summaries."""

from __future__ import annotations

import csv
import io
import math

import numpy as np

SEPARATOR = 255


def to_bytes(images) -> np.ndarray:
    """[0,1] floats to 0..255, rounding half up."""
    return np.floor(np.clip(np.asarray(images, dtype=np.float64), 0.0, 1.0) * 255.0 + 0.5).astype(
        np.uint8
    )


def grid_bytes(images, cols, image_shape=None) -> bytes:
    """Binary PGM (P5, maxval 255) of images tiled row-major.

    Tiles are separated by 1-pixel white lines between rows and columns;
    unused cells of the last row are black.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.size == 0 or len(images) == 0:
        raise ValueError("cannot render an empty batch")
    if image_shape is None:
        if images.ndim == 3:
            image_shape = images.shape[1:]
        else:
            side = math.isqrt(images.shape[1])
            if side * side != images.shape[1]:
                raise ValueError("image_shape is required for non-square images")
            image_shape = (side, side)
    h, w = image_shape
    tiles = to_bytes(images.reshape(len(images), h, w))
    cols = max(1, min(cols, len(images)))
    rows = -(-len(images) // cols)
    canvas = np.full((rows * h + rows - 1, cols * w + cols - 1), SEPARATOR, dtype=np.uint8)
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            y, x = r * (h + 1), c * (w + 1)
            canvas[y : y + h, x : x + w] = tiles[k] if k < len(images) else 0
    height, width = canvas.shape
    return f"P5\n{width} {height}\n255\n".encode("ascii") + canvas.tobytes()


def write_image_grid(images, cols, path, image_shape=None) -> None:
    data = grid_bytes(images, cols, image_shape)
    with open(path, "wb") as fh:
        fh.write(data)


def read_pgm(path) -> np.ndarray:
    """Read back a P5 file written by :func:`write_image_grid`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, dims, maxval, payload = raw.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise ValueError("not an 8-bit binary PGM")
    width, height = map(int, dims.split())
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    if value is None:
        return ""
    return str(value)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(csv_text(header, rows))


def summary_text(sections: dict) -> str:
    """``[section]`` blocks of ``key = value`` lines, in insertion order."""
    out = []
    for name, items in sections.items():
        out.append(f"[{name}]")
        out += [f"{k} = {fmt(v)}" for k, v in items.items()]
        out.append("")
    return "\n".join(out)


def write_summary(path, sections: dict) -> None:
    with open(path, "w") as fh:
        fh.write(summary_text(sections))
