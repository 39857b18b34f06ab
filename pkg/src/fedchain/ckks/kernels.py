"""Modular arithmetic and negacyclic NTT kernels over RNS residue matrices.

Every kernel works on ``int64`` arrays of shape ``(L, N)``: one row of
residues per modulus. Moduli must stay below ``2**51`` so a product quotient
estimated in float64 is off by at most one; the exact remainder is then
recovered with wrapping 64-bit arithmetic.

Both a numba and a numpy implementation exist for each kernel. The public
names (``mulmod``, ``ntt_forward``, ``ntt_inverse``) resolve to one of them at
import time according to :mod:`fedchain._accel`.
"""

import numpy as np

from .._accel import USE_NUMBA, njit

MAX_MODULUS_BITS = 50


# ---------------------------------------------------------------- numpy path

def mulmod_numpy(a, b, q):
    """Elementwise ``a * b mod q`` for residues in ``[0, q)``; ``q`` broadcasts."""
    q = np.asarray(q, dtype=np.int64)
    quot = np.floor(a.astype(np.float64) * b.astype(np.float64) / q.astype(np.float64)).astype(np.int64)
    with np.errstate(over="ignore"):
        r = a * b - quot * q
    r = np.where(r < 0, r + q, r)
    return np.where(r >= q, r - q, r)


def ntt_forward_numpy(a, q, psi_rev):
    L, n = a.shape
    x = np.array(a, dtype=np.int64, copy=True)
    qc = q.reshape(L, 1, 1)
    m = 1
    while m < n:
        t = n // (2 * m)
        blocks = x.reshape(L, m, 2, t)
        u = blocks[:, :, 0, :]
        v = mulmod_numpy(blocks[:, :, 1, :], psi_rev[:, m:2 * m, None], qc)
        s = u + v
        d = u - v
        blocks[:, :, 0, :] = np.where(s >= qc, s - qc, s)
        blocks[:, :, 1, :] = np.where(d < 0, d + qc, d)
        m *= 2
    return x


def ntt_inverse_numpy(a, q, psi_inv_rev, n_inv):
    L, n = a.shape
    x = np.array(a, dtype=np.int64, copy=True)
    qc = q.reshape(L, 1, 1)
    h = n // 2
    while h >= 1:
        t = n // (2 * h)
        blocks = x.reshape(L, h, 2, t)
        u = blocks[:, :, 0, :]
        v = blocks[:, :, 1, :]
        s = u + v
        d = u - v
        d = np.where(d < 0, d + qc, d)
        blocks[:, :, 0, :] = np.where(s >= qc, s - qc, s)
        blocks[:, :, 1, :] = mulmod_numpy(d, psi_inv_rev[:, h:2 * h, None], qc)
        h //= 2
    return mulmod_numpy(x, n_inv.reshape(L, 1), q.reshape(L, 1))


# ---------------------------------------------------------------- numba path

@njit
def _mulmod_scalar(a, b, q):
    quot = np.int64(np.float64(a) * np.float64(b) / np.float64(q))
    r = a * b - quot * q
    if r < 0:
        r += q
    elif r >= q:
        r -= q
    return r


@njit
def _mulmod_rows(a, b, q):
    L, n = a.shape
    out = np.empty_like(a)
    for l in range(L):
        ql = q[l]
        for j in range(n):
            out[l, j] = _mulmod_scalar(a[l, j], b[l, j], ql)
    return out


@njit
def _ntt_forward_nb(a, q, psi_rev):
    L, n = a.shape
    x = a.copy()
    for l in range(L):
        ql = q[l]
        t = n
        m = 1
        while m < n:
            t //= 2
            for i in range(m):
                s = psi_rev[l, m + i]
                j1 = 2 * i * t
                for j in range(j1, j1 + t):
                    u = x[l, j]
                    v = _mulmod_scalar(x[l, j + t], s, ql)
                    y = u + v
                    if y >= ql:
                        y -= ql
                    x[l, j] = y
                    y = u - v
                    if y < 0:
                        y += ql
                    x[l, j + t] = y
            m *= 2
    return x


@njit
def _ntt_inverse_nb(a, q, psi_inv_rev, n_inv):
    L, n = a.shape
    x = a.copy()
    for l in range(L):
        ql = q[l]
        t = 1
        h = n // 2
        while h >= 1:
            for i in range(h):
                s = psi_inv_rev[l, h + i]
                j1 = 2 * i * t
                for j in range(j1, j1 + t):
                    u = x[l, j]
                    v = x[l, j + t]
                    y = u + v
                    if y >= ql:
                        y -= ql
                    x[l, j] = y
                    y = u - v
                    if y < 0:
                        y += ql
                    x[l, j + t] = _mulmod_scalar(y, s, ql)
            t *= 2
            h //= 2
        ninv = n_inv[l]
        for j in range(n):
            x[l, j] = _mulmod_scalar(x[l, j], ninv, ql)
    return x


def mulmod_numba(a, b, q):
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(np.broadcast_to(b, a.shape), dtype=np.int64)
    q = np.ascontiguousarray(q, dtype=np.int64).reshape(-1)
    return _mulmod_rows(a, b, q)


def ntt_forward_numba(a, q, psi_rev):
    return _ntt_forward_nb(np.ascontiguousarray(a, dtype=np.int64), q, psi_rev)


def ntt_inverse_numba(a, q, psi_inv_rev, n_inv):
    return _ntt_inverse_nb(np.ascontiguousarray(a, dtype=np.int64), q, psi_inv_rev, n_inv)


# ------------------------------------------------------------------ dispatch

def mulmod_rows_numpy(a, b, q):
    return mulmod_numpy(a, b, np.asarray(q, dtype=np.int64).reshape(-1, 1))


# name -> (mulmod, ntt_forward, ntt_inverse); mulmod takes one modulus per row
BACKENDS = {
    "numpy": (mulmod_rows_numpy, ntt_forward_numpy, ntt_inverse_numpy),
    "numba": (mulmod_numba, ntt_forward_numba, ntt_inverse_numba),
}

mulmod, ntt_forward, ntt_inverse = BACKENDS["numba" if USE_NUMBA else "numpy"]


def addmod(a, b, q):
    qc = np.asarray(q, dtype=np.int64).reshape(-1, 1)
    s = a + b
    return np.where(s >= qc, s - qc, s)


def submod(a, b, q):
    qc = np.asarray(q, dtype=np.int64).reshape(-1, 1)
    d = a - b
    return np.where(d < 0, d + qc, d)


def negmod(a, q):
    qc = np.asarray(q, dtype=np.int64).reshape(-1, 1)
    return np.where(a == 0, a, qc - a)
