"""Dataset ingestion: IDX files (MNIST) and synthetic Gaussian blobs."""

from __future__ import annotations

import gzip
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .flcore.model import DatasetShard

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801
_DIMS = {IDX_IMAGES: 3, IDX_LABELS: 1}

# 10k MNIST digits converted by tools/mnist_npm_to_idx.py
BUNDLED_MNIST = Path(__file__).resolve().parents[2] / "data" / "mnist-npm"


class IdxFormatError(ValueError):
    pass


class IdxLengthError(IdxFormatError):
    pass


@dataclass(frozen=True)
class IdxHeader:
    magic: int
    dims: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))


def _read_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        data = bytes(source)
    else:
        data = Path(source).read_bytes()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def read_idx(source) -> tuple[IdxHeader, np.ndarray]:
    """Parse an unsigned-byte IDX stream; returns the header and raw uint8 data."""
    data = _read_bytes(source)
    if len(data) < 4:
        raise IdxLengthError("stream shorter than the magic number")
    (magic,) = struct.unpack(">I", data[:4])
    if magic not in _DIMS:
        raise IdxFormatError(f"bad magic 0x{magic:08x}")
    n_dims = _DIMS[magic]
    head_len = 4 + 4 * n_dims
    if len(data) < head_len:
        raise IdxLengthError("truncated header")
    header = IdxHeader(magic, struct.unpack(f">{n_dims}I", data[4:head_len]))
    payload = len(data) - head_len
    if payload < header.size:
        raise IdxLengthError(f"payload has {payload} bytes, header declares {header.size}")
    if payload > header.size:
        raise IdxFormatError(f"{payload - header.size} trailing bytes after the declared payload")
    arr = np.frombuffer(data, dtype=np.uint8, count=header.size, offset=head_len).reshape(header.dims)
    return header, arr.copy()


def parse_idx(source) -> np.ndarray:
    """Images as ``float64`` in [0, 1] (byte / 255), labels as ``int64``."""
    header, arr = read_idx(source)
    if header.magic == IDX_IMAGES:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.int64)


def write_idx(array: np.ndarray) -> bytes:
    arr = np.asarray(array)
    if arr.ndim == 3:
        magic = IDX_IMAGES
    elif arr.ndim == 1:
        magic = IDX_LABELS
    else:
        raise IdxFormatError("only 3-D image or 1-D label arrays are supported")
    if arr.dtype != np.uint8:
        if arr.min() < 0 or arr.max() > 255:
            raise IdxFormatError("values must fit in an unsigned byte")
        arr = arr.astype(np.uint8)
    return struct.pack(">I", magic) + struct.pack(f">{arr.ndim}I", *arr.shape) + arr.tobytes()


def _find(directory: Path, names) -> Path | None:
    for name in names:
        for suffix in ("", ".gz"):
            p = directory / (name + suffix)
            if p.exists():
                return p
    return None


def mnist_files(directory) -> dict[str, Path]:
    """Locate IDX files in ``directory``: the official train/t10k names, or a
    single ``images``/``labels`` pool."""
    d = Path(directory)
    found = {
        "train_images": _find(d, ["train-images-idx3-ubyte", "train-images.idx3-ubyte", "images-idx3-ubyte"]),
        "train_labels": _find(d, ["train-labels-idx1-ubyte", "train-labels.idx1-ubyte", "labels-idx1-ubyte"]),
        "test_images": _find(d, ["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"]),
        "test_labels": _find(d, ["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"]),
    }
    if found["train_images"] is None or found["train_labels"] is None:
        raise FileNotFoundError(f"no IDX image/label files in {d}")
    return {k: v for k, v in found.items() if v is not None}


def default_mnist_dir() -> Path | None:
    env = os.environ.get("FEDCHAIN_MNIST_DIR")
    if env:
        return Path(env)
    return BUNDLED_MNIST if BUNDLED_MNIST.exists() else None


def class_balanced_split(labels: np.ndarray, per_class: list[int], class_count: int, seed: int) -> list[np.ndarray]:
    """Disjoint index sets, each holding ``per_class[k]`` samples of every class."""
    rng = np.random.default_rng(seed)
    out = [[] for _ in per_class]
    for c in range(class_count):
        idx = rng.permutation(np.flatnonzero(labels == c))
        need = sum(per_class)
        if idx.size < need:
            raise ValueError(f"class {c} has {idx.size} samples, {need} requested")
        pos = 0
        for k, n in enumerate(per_class):
            out[k].append(idx[pos:pos + n])
            pos += n
    return [rng.permutation(np.concatenate(parts)) for parts in out]


def load_mnist_subset(directory=None, train_size: int = 5000, test_size: int = 1000, seed: int = 0,
                      class_count: int = 10) -> tuple[DatasetShard, DatasetShard]:
    """Class-balanced train/test subsets with flattened 28x28 features."""
    directory = directory or default_mnist_dir()
    if directory is None:
        raise FileNotFoundError("no MNIST directory configured")
    files = mnist_files(directory)
    images = parse_idx(files["train_images"])
    labels = parse_idx(files["train_labels"])
    if len(images) != len(labels):
        raise IdxFormatError("image and label counts differ")
    x = images.reshape(len(images), -1)
    per_train, per_test = train_size // class_count, test_size // class_count
    if "test_images" in files and "test_labels" in files:
        tx = parse_idx(files["test_images"])
        ty = parse_idx(files["test_labels"])
        (tr,) = class_balanced_split(labels, [per_train], class_count, seed)
        (te,) = class_balanced_split(ty, [per_test], class_count, seed + 1)
        return DatasetShard(x[tr], labels[tr], class_count), DatasetShard(tx.reshape(len(tx), -1)[te], ty[te], class_count)
    tr, te = class_balanced_split(labels, [per_train, per_test], class_count, seed)
    return DatasetShard(x[tr], labels[tr], class_count), DatasetShard(x[te], labels[te], class_count)


def gen_synthetic(classes: int = 10, samples: int = 5000, feature_dim: int = 32, separation: float = 3.0,
                  seed: int = 0, test_samples: int | None = None) -> tuple[DatasetShard, DatasetShard]:
    """Isotropic unit-variance Gaussian blobs around random class centres
    whose typical pairwise distance is ``separation``."""
    if min(classes, samples, feature_dim) < 1:
        raise ValueError("classes, samples and feature_dim must be positive")
    test_samples = samples // 5 if test_samples is None else test_samples
    rng = np.random.default_rng(seed)
    centres = rng.normal(size=(classes, feature_dim))
    centres *= separation / np.sqrt(2 * feature_dim)

    def draw(n):
        y = np.arange(n) % classes
        y = rng.permutation(y)
        return DatasetShard(centres[y] + rng.normal(size=(n, feature_dim)), y, classes)

    return draw(samples), draw(test_samples)
