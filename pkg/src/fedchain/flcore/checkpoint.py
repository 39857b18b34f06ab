"""Model checkpoint bytes: ``b"FLWT" | u8 version | u16 n_dims | n_dims * u32
| u64 count | count * f64``, all little-endian. The SHA-256 of these bytes is
what goes on the ledger."""

import struct

import numpy as np

from .model import ModelWeights

MAGIC = b"FLWT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def to_bytes(w: ModelWeights) -> bytes:
    head = MAGIC + struct.pack("<BH", VERSION, len(w.shape)) + struct.pack(f"<{len(w.shape)}I", *w.shape)
    return head + struct.pack("<Q", w.values.size) + w.values.astype("<f8").tobytes()


def from_bytes(data: bytes) -> ModelWeights:
    if data[:4] != MAGIC:
        raise CheckpointError("bad magic")
    version, n_dims = struct.unpack_from("<BH", data, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    pos = 7
    shape = struct.unpack_from(f"<{n_dims}I", data, pos)
    pos += 4 * n_dims
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    if len(data) != pos + 8 * count:
        raise CheckpointError("payload length mismatch")
    return ModelWeights(np.frombuffer(data, dtype="<f8", offset=pos).astype(np.float64), shape)
