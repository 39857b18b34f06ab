"""Polynomials in RNS form.

A polynomial at level ``l`` is an ``int64`` array of shape ``(l + 1, N)``;
row ``j`` holds the coefficients reduced modulo ``modulus_chain[j]``.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .params import CkksParams, ring_context


def from_signed(coeffs, moduli) -> np.ndarray:
    """Reduce integer coefficients (int64 array or Python ints) into RNS rows."""
    coeffs = np.asarray(coeffs)
    if coeffs.dtype == object:
        return np.array([[int(c) % q for c in coeffs] for q in moduli], dtype=np.int64)
    coeffs = coeffs.astype(np.int64)
    return np.stack([np.mod(coeffs, q) for q in moduli]).astype(np.int64)


def to_rns(values, moduli) -> np.ndarray:
    """Residues of arbitrary-size integers; alias of :func:`from_signed`."""
    return from_signed(np.asarray(list(values), dtype=object), moduli)


def from_rns(residues: np.ndarray, moduli, *, centered: bool = True) -> list[int]:
    """Exact CRT reconstruction into Python integers.

    With ``centered`` the result lies in ``(-Q/2, Q/2]``, otherwise ``[0, Q)``.
    """
    big_q = 1
    for q in moduli:
        big_q *= int(q)
    acc = np.zeros(residues.shape[1], dtype=object)
    for row, q in zip(residues, moduli):
        q = int(q)
        partial = big_q // q
        coef = partial * pow(partial % q, -1, q)
        acc = acc + row.astype(object) * coef
    acc = acc % big_q
    if centered:
        half = big_q // 2
        acc = np.where(acc > half, acc - big_q, acc)
    return acc.tolist()


def poly_mul(a: np.ndarray, b: np.ndarray, params: CkksParams) -> np.ndarray:
    """Negacyclic product of two RNS polynomials at the same level."""
    ctx = ring_context(params)
    q, psi, psi_inv, n_inv = ctx.rows(a.shape[0] - 1)
    fa = kernels.ntt_forward(a, q, psi)
    fb = kernels.ntt_forward(b, q, psi)
    return kernels.ntt_inverse(kernels.mulmod(fa, fb, q), q, psi_inv, n_inv)


def poly_add(a, b, params):
    return kernels.addmod(a, b, _q(params, a))


def poly_sub(a, b, params):
    return kernels.submod(a, b, _q(params, a))


def poly_neg(a, params):
    return kernels.negmod(a, _q(params, a))


def _q(params: CkksParams, a: np.ndarray) -> np.ndarray:
    return np.array(params.modulus_chain[: a.shape[0]], dtype=np.int64)


def negacyclic_mul_reference(a, b, q: int) -> list[int]:
    """Schoolbook product in Z_q[X]/(X^N + 1); slow, used as a test oracle."""
    n = len(a)
    out = [0] * n
    for i, ai in enumerate(a):
        ai = int(ai)
        if not ai:
            continue
        for j, bj in enumerate(b):
            k = i + j
            if k < n:
                out[k] += ai * int(bj)
            else:
                out[k - n] -= ai * int(bj)
    return [c % q for c in out]
