"""Canonical-embedding encoder restricted to real slot values.

Slot ``j`` is the evaluation of the message polynomial at ``zeta**(5**j)``,
``zeta = exp(i*pi/N)``; the conjugate slots at ``zeta**(-5**j)`` are filled
implicitly, which makes the coefficients real. Both directions run through a
single length-``N`` FFT after twisting by powers of ``zeta``.
"""

from __future__ import annotations

import functools

import numpy as np

from .errors import CapacityError, RangeError
from .params import CkksParams
from .rns import from_rns, from_signed
from .scheme import Plaintext

_INT64_SAFE = 2**62


@functools.lru_cache(maxsize=16)
def _slot_layout(n: int):
    exps = np.array([pow(5, j, 2 * n) for j in range(n // 2)], dtype=np.int64)
    slot_idx = (exps - 1) // 2
    conj_idx = (2 * n - exps - 1) // 2
    twist = np.exp(1j * np.pi * np.arange(n) / n)
    return slot_idx, conj_idx, twist


def slots_to_coeffs(values, n: int) -> np.ndarray:
    """Real coefficients of the polynomial whose slots hold ``values``."""
    slot_idx, conj_idx, twist = _slot_layout(n)
    y = np.zeros(n, dtype=np.complex128)
    k = len(values)
    y[slot_idx[:k]] = values
    y[conj_idx[:k]] = np.conj(values)
    return (np.fft.fft(y) / n * np.conj(twist)).real


def coeffs_to_slots(coeffs, n: int) -> np.ndarray:
    slot_idx, _, twist = _slot_layout(n)
    return (n * np.fft.ifft(np.asarray(coeffs, dtype=np.float64) * twist))[slot_idx]


def encode(values, params: CkksParams, level: int | None = None, scale: float | None = None) -> Plaintext:
    """Scale real ``values`` into a plaintext polynomial at ``level``.

    ``level`` defaults to the top of the chain and ``scale`` to
    ``params.scale``. Unused slots are zero.
    """
    level = params.max_level if level is None else level
    params.check_level(level)
    scale = params.scale if scale is None else float(scale)
    if not scale > 0:
        raise RangeError("scale must be positive")
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    if vals.size > params.slots:
        raise CapacityError(f"{vals.size} values exceed {params.slots} slots")
    if not np.all(np.isfinite(vals)):
        raise RangeError("values must be finite")
    coeffs = np.rint(slots_to_coeffs(vals, params.ring_dim) * scale)
    bound = min(_INT64_SAFE, params.modulus_product(level) // 2)
    if coeffs.size and np.max(np.abs(coeffs)) >= bound:
        raise RangeError(f"scaled magnitude {np.max(np.abs(coeffs)):.3g} does not fit modulus at level {level}")
    poly = from_signed(coeffs.astype(np.int64), params.moduli(level))
    return Plaintext(poly, level, scale, params)


def decode(pt: Plaintext, count: int | None = None) -> np.ndarray:
    params = pt.params
    count = params.slots if count is None else int(count)
    if count > params.slots or count < 0:
        raise CapacityError(f"cannot decode {count} of {params.slots} slots")
    if count == 0:
        return np.zeros(0)
    moduli = params.moduli(pt.level)
    if pt.level == 0:
        q = moduli[0]
        r = pt.poly[0]
        coeffs = np.where(r > q // 2, r - q, r).astype(np.float64)
    else:
        coeffs = np.array([float(c) for c in from_rns(pt.poly, moduli)])
    return coeffs_to_slots(coeffs / pt.scale, params.ring_dim).real[:count]
