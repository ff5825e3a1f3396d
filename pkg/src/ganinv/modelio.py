"""Byte-exact model weight files.

Layout, all integers little-endian::

    offset  size  field
    0       8     magic b"GINVMDL\\0"
    8       4     uint32 format version (currently 1)
    12      4     uint32 header length H
    16      H     UTF-8 header, one ``key = value`` per line
    16+H    8     uint64 payload length P (bytes)
    24+H    P     float64 LE blobs: W0 (row-major n_in x n_out), b0, W1, b1, ...
    24+H+P  4     uint32 CRC-32 (zlib polynomial) of the payload

Header keys: ``role``, ``latent_dim``, ``value_range``, ``layers`` (count),
``layer.<k> = <n_in> <n_out> <activation>`` and ``provenance.<name> =
<json>``.  Keys appear in that order, provenance sorted by name.
"""

from __future__ import annotations

import json
import struct
import zlib

import numpy as np

from ganinv.errors import GanInvError
from ganinv.nn import LayerSpec, Model, ModelSpec

MAGIC = b"GINVMDL\x00"
VERSION = 1


class ModelFileError(GanInvError):
    """Base for malformed weight files."""


class ModelFormatError(ModelFileError):
    pass


class ModelVersionError(ModelFileError):
    pass


class ModelChecksumError(ModelFileError):
    pass


class ModelTruncatedError(ModelFileError):
    pass


def _header(model: Model) -> str:
    spec = model.spec
    lines = [
        f"role = {spec.role}",
        f"latent_dim = {spec.latent_dim}",
        f"value_range = {spec.value_range}",
        f"layers = {len(spec.layers)}",
    ]
    lines += [f"layer.{k} = {l.n_in} {l.n_out} {l.activation}" for k, l in enumerate(spec.layers)]
    for key in sorted(model.provenance):
        lines.append(f"provenance.{key} = {json.dumps(model.provenance[key], sort_keys=True)}")
    return "\n".join(lines) + "\n"


def to_bytes(model: Model) -> bytes:
    header = _header(model).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes() for a in model.parameters()
    )
    return b"".join(
        [
            MAGIC,
            struct.pack("<II", VERSION, len(header)),
            header,
            struct.pack("<Q", len(payload)),
            payload,
            struct.pack("<I", zlib.crc32(payload)),
        ]
    )


def from_bytes(raw: bytes) -> Model:
    if len(raw) < 8:
        raise ModelTruncatedError("file shorter than the magic number")
    if raw[:8] != MAGIC:
        raise ModelFormatError("bad magic: not a ganinv model file")
    if len(raw) < 16:
        raise ModelTruncatedError("file ends inside the preamble")
    version, hlen = struct.unpack_from("<II", raw, 8)
    if version != VERSION:
        raise ModelVersionError(f"format version {version} unsupported (this reader: {VERSION})")
    pos = 16
    if len(raw) < pos + hlen + 8:
        raise ModelTruncatedError("file ends inside the header")
    try:
        spec, provenance = _parse_header(raw[pos : pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, ValueError, KeyError) as exc:
        raise ModelFormatError(f"unreadable header: {exc}") from exc
    pos += hlen
    (plen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    if len(raw) < pos + plen + 4:
        raise ModelTruncatedError("file ends inside the weight payload")
    payload = raw[pos : pos + plen]
    (crc,) = struct.unpack_from("<I", raw, pos + plen)
    if zlib.crc32(payload) != crc:
        raise ModelChecksumError("weight payload checksum mismatch")
    expected = 8 * sum(l.n_in * l.n_out + l.n_out for l in spec.layers)
    if plen != expected:
        raise ModelFormatError(f"payload holds {plen} bytes, spec needs {expected}")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    weights, off = [], 0
    for l in spec.layers:
        w = flat[off : off + l.n_in * l.n_out].reshape(l.n_in, l.n_out).copy()
        off += l.n_in * l.n_out
        b = flat[off : off + l.n_out].copy()
        off += l.n_out
        weights.append((w, b))
    return Model(spec, weights, provenance)


def _parse_header(text: str):
    fields, provenance = {}, {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            raise ValueError(f"malformed header line {line!r}")
        if key.startswith("provenance."):
            provenance[key[len("provenance.") :]] = json.loads(value)
        else:
            fields[key] = value
    layers = []
    for k in range(int(fields["layers"])):
        n_in, n_out, act = fields[f"layer.{k}"].split()
        layers.append(LayerSpec(int(n_in), int(n_out), act))
    spec = ModelSpec(tuple(layers), fields["role"], int(fields["latent_dim"]), fields["value_range"])
    return spec, provenance


def save(model: Model, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(model))


def load(path) -> Model:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
