"""Binary layout for keys, plaintexts and ciphertexts.

::

    b"CKKS" | u8 version | u8 kind | u32 header_len | header | u64 body_len | body

header: ``u32 ring_dim, u8 n_moduli, n_moduli * u64 modulus, f64 scale,
f64 error_stddev``. body: ``i32 level (-1 for keys), f64 scale (0 for keys),
u8 n_polys, u32 n_rows``, then each polynomial as ``n_rows * ring_dim``
little-endian 64-bit residues, row-major. All integers are little-endian.
"""

import struct

import numpy as np

from .errors import SerializationError
from .params import CkksParams
from .scheme import Ciphertext, Plaintext, PublicKey, SecretKey

MAGIC = b"CKKS"
VERSION = 1
KIND_PLAINTEXT, KIND_CIPHERTEXT, KIND_PUBLIC_KEY, KIND_SECRET_KEY = 1, 2, 3, 4

_KINDS = {
    Plaintext: (KIND_PLAINTEXT, ("poly",)),
    Ciphertext: (KIND_CIPHERTEXT, ("c0", "c1")),
    PublicKey: (KIND_PUBLIC_KEY, ("b", "a")),
    SecretKey: (KIND_SECRET_KEY, ("s",)),
}


def _pack_params(p: CkksParams) -> bytes:
    n_mod = len(p.modulus_chain)
    return struct.pack(f"<IB{n_mod}Qdd", p.ring_dim, n_mod, *p.modulus_chain, p.scale, p.error_stddev)


def _unpack_params(buf: bytes) -> CkksParams:
    ring_dim, n_mod = struct.unpack_from("<IB", buf)
    fields = struct.unpack_from(f"<{n_mod}Qdd", buf, 5)
    if struct.calcsize(f"<IB{n_mod}Qdd") != len(buf):
        raise SerializationError("parameter header length mismatch")
    return CkksParams(ring_dim, tuple(fields[:n_mod]), fields[n_mod], fields[n_mod + 1])


def dumps(obj) -> bytes:
    try:
        kind, names = _KINDS[type(obj)]
    except KeyError:
        raise SerializationError(f"cannot serialize {type(obj).__name__}") from None
    header = _pack_params(obj.params)
    polys = [np.ascontiguousarray(getattr(obj, n), dtype="<i8") for n in names]
    level = getattr(obj, "level", -1)
    scale = getattr(obj, "scale", 0.0)
    body = struct.pack("<idBI", level, scale, len(polys), polys[0].shape[0])
    body += b"".join(p.tobytes() for p in polys)
    return MAGIC + struct.pack("<BBI", VERSION, kind, len(header)) + header + struct.pack("<Q", len(body)) + body


def loads(data: bytes):
    if data[:4] != MAGIC:
        raise SerializationError("bad magic")
    version, kind, hlen = struct.unpack_from("<BBI", data, 4)
    if version != VERSION:
        raise SerializationError(f"unsupported version {version}")
    pos = 10
    params = _unpack_params(data[pos:pos + hlen])
    pos += hlen
    (blen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    body = data[pos:pos + blen]
    if len(body) != blen or pos + blen != len(data):
        raise SerializationError("body length mismatch")
    level, scale, n_polys, n_rows = struct.unpack_from("<idBI", body)
    off = struct.calcsize("<idBI")
    size = n_rows * params.ring_dim
    if off + 8 * size * n_polys != len(body):
        raise SerializationError("residue payload length mismatch")
    polys = [
        np.frombuffer(body, dtype="<i8", count=size, offset=off + 8 * size * i).astype(np.int64).reshape(n_rows, -1)
        for i in range(n_polys)
    ]
    for cls, (k, names) in _KINDS.items():
        if k == kind:
            if len(names) != n_polys:
                raise SerializationError("polynomial count does not match kind")
            kwargs = dict(zip(names, polys), params=params)
            if cls in (Plaintext, Ciphertext):
                kwargs.update(level=level, scale=scale)
            return cls(**kwargs)
    raise SerializationError(f"unknown kind {kind}")
