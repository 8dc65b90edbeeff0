"""Flat binary checkpoint format.

Layout (all integers little-endian)::

    magic       8 bytes   b"QHYBCKPT"
    version     u32       1
    meta_len    u32       length of the UTF-8 JSON metadata that follows
    meta        bytes     free-form model description (kind, class count, ...)
    n_entries   u32
    n_entries x {
        variant   u16     layer variant id (see layers.LAYER_TYPES; 16 = quantum block)
        n_ints    u16
        ints      n_ints x i64   constructor integers / shape
        n_values  u64     number of float64 values this entry owns
    }
    payload     sum(n_values) x f64, entries in table order, each layer's
                parameters in declaration order, arrays flattened C-order

Files are written to a temp name and renamed into place.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError
from .layers import Sequential, layer_from_config

MAGIC = b"QHYBCKPT"
VERSION = 1
QUANTUM_VARIANT = 16


@dataclass
class Entry:
    variant: int
    ints: tuple
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))


def layer_entries(net: Sequential):
    out = []
    for layer in net:
        flat = [np.asarray(p, dtype=np.float64).reshape(-1) for p in layer.params.values()]
        out.append(Entry(layer.variant_id, tuple(layer.config()), np.concatenate(flat) if flat else np.zeros(0)))
    return out


def layers_from_entries(entries) -> Sequential:
    layers = []
    for e in entries:
        layer = layer_from_config(e.variant, e.ints)
        offset = 0
        for name, p in layer.params.items():
            size = p.size
            if offset + size > e.values.size:
                raise FormatError(f"entry for {type(layer).__name__} holds too few values")
            layer.params[name] = e.values[offset:offset + size].reshape(p.shape).copy()
            offset += size
        if offset != e.values.size:
            raise FormatError(f"entry for {type(layer).__name__} holds {e.values.size} values, expected {offset}")
        layers.append(layer)
    return Sequential(layers)


def atomic_write_bytes(path, data: bytes):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_checkpoint(entries, meta=None) -> bytes:
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta_bytes)), meta_bytes, struct.pack("<I", len(entries))]
    for e in entries:
        ints = tuple(int(i) for i in e.ints)
        parts.append(struct.pack(f"<HH{len(ints)}qQ", e.variant, len(ints), *ints, e.values.size))
    for e in entries:
        parts.append(np.asarray(e.values, dtype="<f8").tobytes())
    return b"".join(parts)


def save_checkpoint(path, entries, meta=None):
    atomic_write_bytes(path, dump_checkpoint(entries, meta))


def parse_checkpoint(buf: bytes):
    def take(fmt, pos):
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise FormatError("checkpoint truncated", pos)
        return struct.unpack_from(fmt, buf, pos), pos + size

    if buf[:8] != MAGIC:
        raise FormatError("not a checkpoint (bad magic)", 0)
    (version, meta_len), pos = take("<II", 8)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 8)
    if pos + meta_len > len(buf):
        raise FormatError("checkpoint truncated in metadata", pos)
    try:
        meta = json.loads(buf[pos:pos + meta_len].decode())
    except ValueError as exc:
        raise FormatError(f"bad checkpoint metadata: {exc}", pos) from None
    pos += meta_len
    (count,), pos = take("<I", pos)
    table = []
    for _ in range(count):
        (variant, n_ints), pos = take("<HH", pos)
        ints, pos = take(f"<{n_ints}q", pos)
        (n_values,), pos = take("<Q", pos)
        table.append((variant, ints, n_values))
    entries = []
    for variant, ints, n_values in table:
        end = pos + 8 * n_values
        if end > len(buf):
            raise FormatError("checkpoint payload truncated", pos)
        values = np.frombuffer(buf, dtype="<f8", count=n_values, offset=pos).astype(np.float64)
        entries.append(Entry(variant, tuple(ints), values))
        pos = end
    if pos != len(buf):
        raise FormatError("trailing bytes after checkpoint payload", pos)
    return entries, meta


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return parse_checkpoint(fh.read())
