"""Binary checkpoint format for trained models.

Layout (all little-endian):

    magic   4 bytes  b"RTDE"
    version u16      currently 1
    m, n    u32 each
    sigma   f64
    for each network (G then H):
        layer_count u32
        per layer: rows u32, cols u32, activation tag u8, activation param f64
        per layer (same order): weights rows*cols f64 row-major, bias rows f64
    norm_stats: present u8; if 1: feature_count u32, mins f64*, maxs f64*
    crc32   u32 over every preceding byte

Loading verifies magic, version, CRC, and shape consistency; a round trip
reproduces the model bit for bit.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .model import RoundtripModel
from .nn import ACTIVATIONS, DenseLayer, Mlp
from .simdata import NormStats

MAGIC = b"RTDE"
FORMAT_VERSION = 1

_ACT_TAGS = {name: i for i, name in enumerate(ACTIVATIONS)}
_TAG_ACTS = {i: name for name, i in _ACT_TAGS.items()}


class CheckpointError(ValueError):
    """Base class for unreadable or inconsistent checkpoint files."""


class CorruptCheckpointError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


def _pack_net(net: Mlp) -> bytes:
    parts = [struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        param = layer.slope if layer.activation == "leaky_relu" else 0.0
        parts.append(
            struct.pack("<IIBd", layer.out_dim, layer.in_dim, _ACT_TAGS[layer.activation], param)
        )
    for layer in net.layers:
        parts.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.buf):
            raise CorruptCheckpointError("checkpoint file is truncated")
        out = self.buf[self.pos : self.pos + count]
        self.pos += count
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def floats(self, count: int) -> np.ndarray:
        raw = self.take(8 * count)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)


def _unpack_net(reader: _Reader) -> Mlp:
    (layer_count,) = reader.unpack("<I")
    if layer_count == 0 or layer_count > 10_000:
        raise CorruptCheckpointError(f"implausible layer count {layer_count}")
    headers = []
    for _ in range(layer_count):
        rows, cols, tag, param = reader.unpack("<IIBd")
        if tag not in _TAG_ACTS:
            raise CorruptCheckpointError(f"unknown activation tag {tag}")
        headers.append((rows, cols, _TAG_ACTS[tag], param))
    layers = []
    for rows, cols, act, param in headers:
        w = reader.floats(rows * cols).reshape(rows, cols)
        b = reader.floats(rows)
        slope = param if act == "leaky_relu" else 0.2
        try:
            layers.append(DenseLayer(w, b, act, slope))
        except ValueError as exc:
            raise CheckpointError(f"inconsistent layer in checkpoint: {exc}") from exc
    try:
        return Mlp(layers)
    except ValueError as exc:
        raise CheckpointError(f"inconsistent network in checkpoint: {exc}") from exc


def serialize(model: RoundtripModel) -> bytes:
    body = [MAGIC, struct.pack("<HIId", FORMAT_VERSION, model.m, model.n, model.sigma)]
    body.append(_pack_net(model.g_net))
    body.append(_pack_net(model.h_net))
    if model.norm_stats is None:
        body.append(struct.pack("<B", 0))
    else:
        stats = model.norm_stats
        body.append(struct.pack("<BI", 1, len(stats.mins)))
        body.append(np.ascontiguousarray(stats.mins, dtype="<f8").tobytes())
        body.append(np.ascontiguousarray(stats.maxs, dtype="<f8").tobytes())
    payload = b"".join(body)
    return payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)


def deserialize(blob: bytes) -> RoundtripModel:
    if len(blob) < len(MAGIC) + 4:
        raise CorruptCheckpointError("checkpoint file is truncated")
    payload, crc_bytes = blob[:-4], blob[-4:]
    (crc_stored,) = struct.unpack("<I", crc_bytes)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise CorruptCheckpointError("checkpoint CRC mismatch (file corrupt or truncated)")
    reader = _Reader(payload)
    if reader.take(4) != MAGIC:
        raise CorruptCheckpointError("not a checkpoint file (bad magic)")
    version, m, n, sigma = reader.unpack("<HIId")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"checkpoint format version {version} not supported (expected {FORMAT_VERSION})"
        )
    g_net = _unpack_net(reader)
    h_net = _unpack_net(reader)
    (has_stats,) = reader.unpack("<B")
    stats = None
    if has_stats:
        (count,) = reader.unpack("<I")
        mins = reader.floats(count)
        maxs = reader.floats(count)
        stats = NormStats(mins, maxs)
    if reader.pos != len(payload):
        raise CorruptCheckpointError("trailing bytes after checkpoint payload")
    try:
        return RoundtripModel(g_net, h_net, sigma, m, n, stats)
    except ValueError as exc:
        raise CheckpointError(f"checkpoint dimensions are inconsistent: {exc}") from exc


def save_checkpoint(model: RoundtripModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(model))


def load_checkpoint(path) -> RoundtripModel:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
