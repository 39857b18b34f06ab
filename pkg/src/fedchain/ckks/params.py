from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from sympy import isprime

from .errors import ParameterError
from .kernels import MAX_MODULUS_BITS


@dataclass(frozen=True)
class CkksParams:
    """Ring dimension, RNS modulus chain and encoding scale.

    ``modulus_chain[0]`` is the base prime that survives every rescale; the
    last prime is the first one dropped. Level ``l`` uses the prefix
    ``modulus_chain[: l + 1]``.
    """

    ring_dim: int
    modulus_chain: tuple[int, ...]
    scale: float
    error_stddev: float = 3.2

    def __post_init__(self):
        n = self.ring_dim
        if n < 16 or n & (n - 1):
            raise ParameterError(f"ring_dim must be a power of two >= 16, got {n}")
        chain = tuple(int(q) for q in self.modulus_chain)
        object.__setattr__(self, "modulus_chain", chain)
        if not chain:
            raise ParameterError("modulus chain is empty")
        if len(set(chain)) != len(chain):
            raise ParameterError("moduli must be distinct")
        for q in chain:
            if q.bit_length() > MAX_MODULUS_BITS:
                raise ParameterError(f"modulus {q} exceeds {MAX_MODULUS_BITS} bits")
            if q % (2 * n) != 1:
                raise ParameterError(f"modulus {q} is not 1 mod 2*ring_dim")
            if not isprime(q):
                raise ParameterError(f"modulus {q} is not prime")
        if not self.scale > 1:
            raise ParameterError("scale must exceed 1")
        if self.scale >= min(chain):
            raise ParameterError("scale must be below the smallest modulus")
        if self.error_stddev < 0:
            raise ParameterError("error_stddev must be non-negative")

    @property
    def slots(self) -> int:
        return self.ring_dim // 2

    @property
    def max_level(self) -> int:
        return len(self.modulus_chain) - 1

    def moduli(self, level: int) -> tuple[int, ...]:
        self.check_level(level)
        return self.modulus_chain[: level + 1]

    def modulus_product(self, level: int) -> int:
        out = 1
        for q in self.moduli(level):
            out *= q
        return out

    def check_level(self, level: int) -> None:
        if not 0 <= level <= self.max_level:
            raise ParameterError(f"level {level} outside [0, {self.max_level}]")


def ntt_primes(ring_dim: int, bits: int, count: int, *, above: bool = False, exclude=()) -> list[int]:
    """``count`` primes ``q = 1 mod 2*ring_dim`` adjacent to ``2**bits``.

    Searches downward from ``2**bits`` by default, upward when ``above`` is set
    (used for primes that must exceed a power-of-two scale).
    """
    step = 2 * ring_dim
    if above:
        q = (2**bits // step + 1) * step + 1
    else:
        q = ((2**bits - 1) // step) * step + 1
    found = []
    while len(found) < count:
        if q <= step:
            raise ParameterError(f"ran out of {bits}-bit NTT primes for ring_dim {ring_dim}")
        if q not in exclude and isprime(q):
            found.append(q)
        q = q + step if above else q - step
    return found


def default_params(ring_dim: int = 8192, scale_bits: int = 40, error_stddev: float = 3.2) -> CkksParams:
    """Base prime just under 2**50 plus two primes just above 2**scale_bits."""
    base = ntt_primes(ring_dim, MAX_MODULUS_BITS, 1)
    special = ntt_primes(ring_dim, scale_bits, 2, above=True, exclude=base)
    return CkksParams(ring_dim, tuple(base + special), float(2**scale_bits), error_stddev)


PRESETS = {
    "full": 8192,
    "medium": 4096,
    "small": 1024,
    "test": 64,
}


@functools.lru_cache(maxsize=None)
def preset(name: str) -> CkksParams:
    try:
        return default_params(PRESETS[name])
    except KeyError:
        raise ParameterError(f"unknown CKKS preset {name!r}; choose from {sorted(PRESETS)}") from None


def _bit_reverse(i: int, bits: int) -> int:
    return int(format(i, f"0{bits}b")[::-1], 2) if bits else 0


def _primitive_2n_root(q: int, n: int) -> int:
    # g^((q-1)/2n) has order dividing 2n; it is primitive iff its n-th power is -1
    for g in range(2, q):
        root = pow(g, (q - 1) // (2 * n), q)
        if pow(root, n, q) == q - 1:
            return root
    raise ParameterError(f"no primitive {2 * n}-th root modulo {q}")  # pragma: no cover


@dataclass(frozen=True, eq=False)
class RingContext:
    """Per-parameter NTT tables, stacked one row per chain modulus."""

    params: CkksParams
    q: np.ndarray
    psi_rev: np.ndarray
    psi_inv_rev: np.ndarray
    n_inv: np.ndarray

    def rows(self, level: int):
        k = level + 1
        return self.q[:k], self.psi_rev[:k], self.psi_inv_rev[:k], self.n_inv[:k]


@functools.lru_cache(maxsize=16)
def ring_context(params: CkksParams) -> RingContext:
    n = params.ring_dim
    bits = n.bit_length() - 1
    rev = [_bit_reverse(i, bits) for i in range(n)]
    psi_rev, psi_inv_rev, n_inv = [], [], []
    for q in params.modulus_chain:
        psi = _primitive_2n_root(q, n)
        psi_inv = pow(psi, -1, q)
        fwd = [1] * n
        inv = [1] * n
        for i in range(1, n):
            fwd[i] = fwd[i - 1] * psi % q
            inv[i] = inv[i - 1] * psi_inv % q
        psi_rev.append([fwd[r] for r in rev])
        psi_inv_rev.append([inv[r] for r in rev])
        n_inv.append(pow(n, -1, q))
    return RingContext(
        params=params,
        q=np.array(params.modulus_chain, dtype=np.int64),
        psi_rev=np.array(psi_rev, dtype=np.int64),
        psi_inv_rev=np.array(psi_inv_rev, dtype=np.int64),
        n_inv=np.array(n_inv, dtype=np.int64),
    )
