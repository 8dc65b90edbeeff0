"""IDX ingestion, max-pool downsampling, seeded class subsets, synthetic blobs.

IDX files (optionally gzipped) hold a big-endian header: two zero bytes, a
dtype code (0x08 unsigned byte, 0x0D float64), the number of dimensions,
then one u32 per dimension.  Byte images are scaled by 1/255 on load;
float64 images are taken as-is, which lets prepared subsets round-trip
through the same format without loss.
"""
from __future__ import annotations

import gzip
import hashlib
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, ShapeError
from .rng import substream

FASHION_CLASSES = ("t-shirt/top", "trouser", "pullover", "dress", "coat",
                   "sandal", "shirt", "sneaker", "bag", "ankle boot")
SOURCES = ("mnist", "fashion", "synth")

_DTYPES = {0x08: np.dtype(">u1"), 0x0D: np.dtype(">f8")}
_CODES = {np.dtype(np.uint8): 0x08, np.dtype(np.float64): 0x0D}


@dataclass
class DatasetSplit:
    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    classes: tuple = ()
    source_index: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 3:
            raise ShapeError(f"images must be (N, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ShapeError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ConfigurationError("pixel values must lie in [0, 1]")
        if self.split not in ("train", "validation"):
            raise ConfigurationError(f"split must be train or validation, got {self.split!r}")

    def __len__(self):
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.classes) if self.classes else int(self.labels.max()) + 1

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(str(self.images.shape).encode())
        h.update(np.ascontiguousarray(self.images, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype="<i8").tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class SubsetSpec:
    source: str = "mnist"
    classes: tuple = (1, 7, 9)
    per_class: int = 400
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(int(c) for c in self.classes))
        if self.source not in SOURCES:
            raise ConfigurationError(f"unknown source {self.source!r}")
        if len(set(self.classes)) != len(self.classes) or len(self.classes) < 2:
            raise ConfigurationError(f"need at least two distinct classes, got {self.classes}")
        if self.per_class < 2:
            raise ConfigurationError("per_class must be at least 2")

    @property
    def total(self) -> int:
        return self.per_class * len(self.classes)

    @property
    def name(self) -> str:
        prefix = {"mnist": "MNIST", "fashion": "Fashion", "synth": "Synth"}[self.source]
        return f"{prefix}_{''.join(str(c) for c in self.classes)}"


# IDX

def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        try:
            raw = gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise FormatError(f"{path}: corrupt gzip stream ({exc})") from None
    return raw


def parse_idx(raw: bytes, expected_ndim: int, name="idx") -> np.ndarray:
    if len(raw) < 4:
        raise FormatError(f"{name}: truncated header", len(raw))
    zero, code, ndim = struct.unpack_from(">HBB", raw, 0)
    if zero != 0 or code not in _DTYPES or ndim != expected_ndim:
        magic = struct.unpack_from(">I", raw, 0)[0]
        raise FormatError(f"{name}: bad magic 0x{magic:08x} (expected {expected_ndim}-d IDX)", 0)
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise FormatError(f"{name}: truncated header", len(raw))
    dims = struct.unpack_from(f">{ndim}I", raw, 4)
    dtype = _DTYPES[code]
    need = header + int(np.prod(dims)) * dtype.itemsize
    if len(raw) < need:
        raise FormatError(f"{name}: truncated, expected {need} bytes, got {len(raw)}", len(raw))
    if len(raw) > need:
        raise FormatError(f"{name}: {len(raw) - need} trailing bytes", need)
    return np.frombuffer(raw, dtype=dtype, offset=header).reshape(dims)


def load_idx(images_path, labels_path, split="train") -> DatasetSplit:
    images = parse_idx(_read_bytes(images_path), 3, os.fspath(images_path))
    labels = parse_idx(_read_bytes(labels_path), 1, os.fspath(labels_path))
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels")
    if images.dtype.kind == "u":
        pixels = images.astype(np.float64) / 255.0
    else:
        pixels = images.astype(np.float64)
    return DatasetSplit(pixels, labels.astype(np.int64), split)


def encode_idx(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    code = _CODES.get(array.dtype)
    if code is None:
        raise ConfigurationError(f"IDX writer supports uint8 and float64, not {array.dtype}")
    header = struct.pack(">HBB", 0, code, array.ndim) + struct.pack(f">{array.ndim}I", *array.shape)
    return header + array.astype(_DTYPES[code]).tobytes()


def find_idx_pair(data_dir, source="mnist", prefix="train"):
    """Locate ``<prefix>-images-idx3-ubyte[.gz]`` and its labels under ``data_dir``.

    ``data_dir/<source>/`` is searched before ``data_dir`` itself.
    """
    base = Path(data_dir)
    for d in (base / source, base):
        pair = []
        for kind in ("images-idx3", "labels-idx1"):
            stem = d / f"{prefix}-{kind}-ubyte"
            hit = next((p for p in (stem, stem.with_name(stem.name + ".gz")) if p.is_file()), None)
            pair.append(hit)
        if all(pair):
            return tuple(pair)
    raise FileNotFoundError(f"no {prefix} IDX files for {source!r} under {base}")


def save_split(split: DatasetSplit, directory, prefix):
    from .nn.checkpoint import atomic_write_bytes

    directory = Path(directory)
    atomic_write_bytes(directory / f"{prefix}-images-idx3-ubyte", encode_idx(split.images))
    atomic_write_bytes(directory / f"{prefix}-labels-idx1-ubyte", encode_idx(split.labels.astype(np.uint8)))


# transforms

def downsample_maxpool(split: DatasetSplit, k: int = 2) -> DatasetSplit:
    n, h, w = split.images.shape
    if k < 1 or h % k or w % k:
        raise ShapeError(f"{h}x{w} images are not divisible into {k}x{k} windows")
    pooled = split.images.reshape(n, h // k, k, w // k, k).max(axis=(2, 4))
    return DatasetSplit(pooled, split.labels.copy(), split.split, split.classes, split.source_index)


def make_subset(split: DatasetSplit, spec: SubsetSpec):
    """Seeded class subset split 50/50 into (train, validation), stratified per class.

    Selection takes the first ``per_class`` samples of each class in a
    seeded permutation; labels become 0..C-1 in ascending original-class
    order.  Odd per-class counts give the extra sample to train.
    """
    order = substream(spec.seed, "subset").permutation(len(split))
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    classes = tuple(sorted(spec.classes))
    train_idx, val_idx = [], []
    for c in classes:
        members = order[split.labels[order] == c]
        if len(members) < spec.per_class:
            raise ConfigurationError(f"class {c} has {len(members)} samples, need {spec.per_class}")
        chosen = members[:spec.per_class]
        half = (spec.per_class + 1) // 2
        train_idx.append(chosen[:half])
        val_idx.append(chosen[half:])
    remap = np.full(max(int(split.labels.max()), max(classes)) + 1, -1)
    remap[list(classes)] = np.arange(len(classes))

    def build(parts, name):
        idx = np.concatenate(parts)
        idx = idx[np.argsort(rank[idx], kind="stable")]
        return DatasetSplit(split.images[idx], remap[split.labels[idx]], name, classes, idx)

    return build(train_idx, "train"), build(val_idx, "validation")


def synth_dataset(num_classes: int, n: int, seed: int, size: int = 14, noise: float = 0.15) -> DatasetSplit:
    """Class-conditional blob images: class ``c`` puts a bright spot at angle 2 pi c / C.

    The per-class pattern is fixed; each sample gets seeded positional
    jitter of up to one pixel plus uniform background noise.  Class counts
    differ by at most one.
    """
    if num_classes < 2 or n < num_classes:
        raise ConfigurationError("need at least two classes and one sample per class")
    rng = substream(seed, "synth")
    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    mid, radius, sigma = (size - 1) / 2, size * 0.28, size * 0.12
    angles = 2 * np.pi * labels / num_classes
    cy = mid + radius * np.sin(angles) + rng.uniform(-1, 1, n)
    cx = mid + radius * np.cos(angles) + rng.uniform(-1, 1, n)
    d2 = (yy[None] - cy[:, None, None]) ** 2 + (xx[None] - cx[:, None, None]) ** 2
    images = np.exp(-d2 / (2 * sigma * sigma)) + rng.uniform(0, noise, (n, size, size))
    return DatasetSplit(np.clip(images, 0, 1), labels, "train", tuple(range(num_classes)))
