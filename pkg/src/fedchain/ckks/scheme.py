"""Key generation, encryption and the homomorphic operations FedAvg needs.

Polynomials are kept in coefficient form; products go through the NTT
kernels on demand. All sampling uses a Philox counter-based generator keyed by
an explicit seed, so every output is reproducible. This is a research
artifact: sampling is not constant-time and no security level is claimed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AlignmentError, DepthError, RangeError
from .params import CkksParams, ring_context
from .rns import from_signed, poly_add, poly_mul, poly_neg

SCALE_RTOL = 1e-9


class _PolyRecord:
    """Equality over the array fields plus level/scale/params."""

    _arrays: tuple[str, ...] = ()

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        if getattr(self, "params") != getattr(other, "params"):
            return False
        for name in ("level", "scale"):
            if getattr(self, name, None) != getattr(other, name, None):
                return False
        return all(np.array_equal(getattr(self, a), getattr(other, a)) for a in self._arrays)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Plaintext(_PolyRecord):
    poly: np.ndarray
    level: int
    scale: float
    params: CkksParams
    _arrays = ("poly",)


@dataclass(frozen=True, eq=False)
class Ciphertext(_PolyRecord):
    c0: np.ndarray
    c1: np.ndarray
    level: int
    scale: float
    params: CkksParams
    _arrays = ("c0", "c1")


@dataclass(frozen=True, eq=False)
class PublicKey(_PolyRecord):
    b: np.ndarray
    a: np.ndarray
    params: CkksParams
    _arrays = ("b", "a")


@dataclass(frozen=True, eq=False)
class SecretKey(_PolyRecord):
    s: np.ndarray
    params: CkksParams
    _arrays = ("s",)


@dataclass(frozen=True)
class KeyPair:
    public_key: PublicKey
    secret_key: SecretKey


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def _ternary(rng, n):
    return rng.integers(-1, 2, size=n, dtype=np.int64)


def _gaussian(rng, n, sigma):
    return np.rint(rng.normal(0.0, sigma, size=n)).astype(np.int64)


def keygen(params: CkksParams, seed: int) -> KeyPair:
    rng = _rng(seed)
    n = params.ring_dim
    moduli = params.modulus_chain
    s = from_signed(_ternary(rng, n), moduli)
    a = np.stack([rng.integers(0, q, size=n, dtype=np.int64) for q in moduli])
    e = from_signed(_gaussian(rng, n, params.error_stddev), moduli)
    b = poly_add(poly_neg(poly_mul(a, s, params), params), e, params)
    return KeyPair(PublicKey(b, a, params), SecretKey(s, params))


def encrypt(pt: Plaintext, pk: PublicKey, seed: int) -> Ciphertext:
    params = pt.params
    if pk.params != params:
        raise AlignmentError("public key and plaintext use different parameters")
    rng = _rng(seed)
    n = params.ring_dim
    k = pt.level + 1
    moduli = params.moduli(pt.level)
    q, psi, psi_inv, n_inv = ring_context(params).rows(pt.level)
    v = kernels.ntt_forward(from_signed(_ternary(rng, n), moduli), q, psi)
    e0 = from_signed(_gaussian(rng, n, params.error_stddev), moduli)
    e1 = from_signed(_gaussian(rng, n, params.error_stddev), moduli)
    bv = kernels.ntt_inverse(kernels.mulmod(kernels.ntt_forward(pk.b[:k], q, psi), v, q), q, psi_inv, n_inv)
    av = kernels.ntt_inverse(kernels.mulmod(kernels.ntt_forward(pk.a[:k], q, psi), v, q), q, psi_inv, n_inv)
    c0 = poly_add(poly_add(bv, e0, params), pt.poly, params)
    c1 = poly_add(av, e1, params)
    return Ciphertext(c0, c1, pt.level, pt.scale, params)


def decrypt(ct: Ciphertext, sk: SecretKey) -> Plaintext:
    params = ct.params
    if sk.params != params:
        raise AlignmentError("secret key and ciphertext use different parameters")
    k = ct.level + 1
    m = poly_add(ct.c0, poly_mul(ct.c1, sk.s[:k], params), params)
    return Plaintext(m, ct.level, ct.scale, params)


def _check_aligned(a, b) -> None:
    if a.params != b.params:
        raise AlignmentError("operands use different parameters")
    if a.level != b.level:
        raise AlignmentError(f"level mismatch: {a.level} vs {b.level}")


def _check_scales(a, b) -> None:
    if not math.isclose(a.scale, b.scale, rel_tol=SCALE_RTOL):
        raise AlignmentError(f"scale mismatch: {a.scale!r} vs {b.scale!r}")


def add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_aligned(a, b)
    _check_scales(a, b)
    p = a.params
    return Ciphertext(poly_add(a.c0, b.c0, p), poly_add(a.c1, b.c1, p), a.level, a.scale, p)


def add_plain(a: Ciphertext, pt: Plaintext) -> Ciphertext:
    _check_aligned(a, pt)
    _check_scales(a, pt)
    return Ciphertext(poly_add(a.c0, pt.poly, a.params), a.c1, a.level, a.scale, a.params)


def mul_plain(a: Ciphertext, pt: Plaintext) -> Ciphertext:
    """Product with a plaintext; the result carries ``a.scale * pt.scale``."""
    _check_aligned(a, pt)
    params = a.params
    scale = a.scale * pt.scale
    if scale >= params.modulus_product(a.level):
        raise RangeError(f"product scale {scale:.3g} exceeds the modulus at level {a.level}")
    q, psi, psi_inv, n_inv = ring_context(params).rows(a.level)
    fp = kernels.ntt_forward(pt.poly, q, psi)
    c0 = kernels.ntt_inverse(kernels.mulmod(kernels.ntt_forward(a.c0, q, psi), fp, q), q, psi_inv, n_inv)
    c1 = kernels.ntt_inverse(kernels.mulmod(kernels.ntt_forward(a.c1, q, psi), fp, q), q, psi_inv, n_inv)
    return Ciphertext(c0, c1, a.level, scale, params)


def _divide_round_last(x: np.ndarray, params: CkksParams) -> np.ndarray:
    k = x.shape[0] - 1
    q_last = params.modulus_chain[k]
    last = x[k]
    last = np.where(last > q_last // 2, last - q_last, last)
    rows = []
    for j in range(k):
        qj = params.modulus_chain[j]
        diff = np.mod(x[j] - np.mod(last, qj), qj)
        inv = np.full_like(diff, pow(q_last % qj, -1, qj))
        rows.append(kernels.mulmod(diff[None, :], inv[None, :], np.array([qj], dtype=np.int64))[0])
    return np.stack(rows)


def rescale(a: Ciphertext) -> Ciphertext:
    """Divide by the last active modulus (rounding) and drop it."""
    if a.level < 1:
        raise DepthError("ciphertext is at level 0; nothing left to rescale")
    params = a.params
    q_last = params.modulus_chain[a.level]
    return Ciphertext(
        _divide_round_last(a.c0, params),
        _divide_round_last(a.c1, params),
        a.level - 1,
        a.scale / q_last,
        params,
    )


def drop_level(a: Ciphertext, level: int) -> Ciphertext:
    """Discard moduli above ``level`` without touching the scale."""
    a.params.check_level(level)
    if level > a.level:
        raise AlignmentError(f"cannot raise level {a.level} to {level}")
    k = level + 1
    return Ciphertext(a.c0[:k].copy(), a.c1[:k].copy(), level, a.scale, a.params)
