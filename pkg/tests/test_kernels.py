import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedchain.ckks import ntt_primes, preset, ring_context
from fedchain.ckks.kernels import BACKENDS, MAX_MODULUS_BITS, addmod, negmod, submod
from fedchain.ckks.rns import from_rns, negacyclic_mul_reference, poly_mul, to_rns


def _random_rows(rng, q, n):
    return np.stack([rng.integers(0, qi, n, dtype=np.int64) for qi in q])


@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_mulmod_matches_python_integers(backend, rng):
    mulmod = BACKENDS[backend][0]
    q = np.array(ntt_primes(64, 50, 2) + ntt_primes(64, 40, 1), dtype=np.int64)
    a = _random_rows(rng, q, 256)
    b = _random_rows(rng, q, 256)
    # extremes that stress the float quotient estimate
    a[:, 0] = q - 1
    b[:, 0] = q - 1
    got = mulmod(a, b, q)
    want = [[int(x) * int(y) % int(qi) for x, y in zip(ra, rb)] for ra, rb, qi in zip(a, b, q)]
    assert got.tolist() == want


@pytest.mark.parametrize("name", ["test", "full"])
@pytest.mark.parametrize("backend", sorted(BACKENDS))
def test_ntt_roundtrip_is_exact_for_every_modulus(name, backend, rng):
    _, fwd, inv = BACKENDS[backend]
    params = preset(name)
    q, psi, psi_inv, n_inv = ring_context(params).rows(params.max_level)
    a = _random_rows(rng, q, params.ring_dim)
    assert np.array_equal(inv(fwd(a, q, psi), q, psi_inv, n_inv), a)


def test_backends_agree_bit_for_bit(rng):
    params = preset("small")
    q, psi, psi_inv, n_inv = ring_context(params).rows(params.max_level)
    a = _random_rows(rng, q, params.ring_dim)
    b = _random_rows(rng, q, params.ring_dim)
    (m1, f1, i1), (m2, f2, i2) = BACKENDS["numpy"], BACKENDS["numba"]
    assert np.array_equal(m1(a, b, q), m2(a, b, q))
    assert np.array_equal(f1(a, q, psi), f2(a, q, psi))
    assert np.array_equal(i1(a, q, psi_inv, n_inv), i2(a, q, psi_inv, n_inv))


@pytest.mark.parametrize("name", ["test", "small"])
def test_ntt_product_matches_schoolbook(name, rng):
    params = preset(name)
    q = params.modulus_chain
    n = params.ring_dim
    a = _random_rows(rng, q, n)
    b = _random_rows(rng, q, n)
    got = poly_mul(a, b, params)
    rows = [0] if n > 256 else range(len(q))
    for j in rows:
        assert got[j].tolist() == negacyclic_mul_reference(a[j].tolist(), b[j].tolist(), q[j])


def test_schoolbook_wraps_negacyclically():
    # x^(n-1) * x = x^n = -1
    n, q = 16, 97
    a = [0] * n
    a[n - 1] = 1
    b = [0] * n
    b[1] = 1
    assert negacyclic_mul_reference(a, b, q) == [q - 1] + [0] * (n - 1)


def test_add_sub_neg_modular(rng):
    q = np.array([97, 193], dtype=np.int64)
    a = _random_rows(rng, q, 32)
    b = _random_rows(rng, q, 32)
    assert np.array_equal(addmod(a, b, q), (a + b) % q[:, None])
    assert np.array_equal(submod(a, b, q), (a - b) % q[:, None])
    assert np.array_equal(addmod(a, negmod(a, q), q), np.zeros_like(a))


@given(st.lists(st.integers(min_value=-(2**120), max_value=2**120), min_size=64, max_size=64))
def test_rns_roundtrip_is_exact_below_chain_product(values):
    params = preset("test")
    moduli = params.modulus_chain
    assert from_rns(to_rns(values, moduli), moduli) == values


def test_moduli_fit_the_kernel_limit():
    for name in ("test", "small", "medium", "full"):
        assert all(q.bit_length() <= MAX_MODULUS_BITS for q in preset(name).modulus_chain)
