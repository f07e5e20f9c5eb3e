import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heda import crypto
from heda.crypto import (
    FixedPointCodec,
    KeyMismatchError,
    ParameterError,
    ScaleMismatchError,
    SchemeMismatchError,
)


@pytest.fixture(scope="module")
def pk(keys):
    return keys["alice_paillier"]


@pytest.fixture(scope="module")
def rk(keys):
    return keys["alice_rsa"]


def test_keygen_sizes(pk, rk):
    assert pk.public.n.bit_length() == 512
    assert rk.public.n.bit_length() == 512
    assert pk.public.g == pk.public.n + 1
    assert pk.p != pk.q
    assert (rk.public.e * rk.d) % ((rk.p - 1) * (rk.q - 1)) == 1


def test_default_key_size_is_2048():
    assert crypto.DEFAULT_KEY_BITS == 2048


@pytest.mark.parametrize("bits", [128, 255, 257])
def test_keygen_rejects_bad_sizes(bits):
    with pytest.raises(ParameterError):
        crypto.paillier_keygen(bits)
    with pytest.raises(ParameterError):
        crypto.rsa_keygen(bits)


def test_paillier_trivial_round_trips(pk):
    assert crypto.paillier_decrypt(pk, crypto.paillier_encrypt(pk.public, 0)) == 0
    assert crypto.paillier_decrypt(pk, crypto.paillier_encrypt(pk, 42)) == 42
    n = pk.public.n
    assert crypto.paillier_decrypt(pk, crypto.paillier_encrypt(pk.public, n - 1)) == n - 1


def test_paillier_random_round_trips(pk):
    rng = random.Random(1)
    for _ in range(100):
        m = rng.randrange(pk.public.n)
        # public-key and CRT encryption paths must agree on the plaintext
        assert crypto.paillier_decrypt(pk, crypto.paillier_encrypt(pk.public, m)) == m
        assert crypto.paillier_decrypt(pk, crypto.paillier_encrypt(pk, m)) == m


def test_paillier_randomized(pk):
    assert crypto.paillier_encrypt(pk, 5).value != crypto.paillier_encrypt(pk, 5).value


def test_paillier_homomorphisms(pk):
    dec = lambda c: crypto.paillier_decrypt(pk, c)
    e = lambda m: crypto.paillier_encrypt(pk, m)
    assert dec(crypto.paillier_add(e(2), e(3))) == 5
    assert dec(crypto.paillier_add(e(17), e(0))) == 17
    assert dec(crypto.paillier_scalar_mul(e(7), 3)) == 21
    assert dec(crypto.paillier_scalar_mul(e(9), 1)) == 9
    codec = FixedPointCodec(pk.public.n)
    assert codec.signed(dec(crypto.paillier_scalar_mul(e(codec.encode(-4, 0)), 5))) == -20
    assert dec(crypto.paillier_sub(e(10), e(4))) == 6
    assert dec(crypto.paillier_sum([e(1), e(2), e(3)])) == 6


def test_fixed_point_addition_under_encryption(pk):
    a = crypto.encrypt_real(pk, -1.5)
    b = crypto.encrypt_real(pk, 2.75)
    assert crypto.decrypt_real(pk, crypto.paillier_add(a, b)) == 1.25


def test_scale_ledger(pk):
    a = crypto.encrypt_real(pk, 1.0, scale_exp=1)
    b = crypto.encrypt_real(pk, 1.0, scale_exp=2)
    with pytest.raises(ScaleMismatchError):
        crypto.paillier_add(a, b)
    prod = crypto.paillier_scalar_mul(a, 250, 1)
    assert prod.scale_exp == 2
    assert crypto.decrypt_real(pk, prod) == 2.5
    up = crypto.rescale(a, 3)
    assert up.scale_exp == 3 and crypto.decrypt_real(pk, up) == 1.0
    with pytest.raises(ScaleMismatchError):
        crypto.rescale(up, 1)


def test_key_and_scheme_mismatch(keys, pk, rk):
    other = keys["bob_paillier"]
    c1 = crypto.paillier_encrypt(pk, 1)
    c2 = crypto.paillier_encrypt(other, 1)
    with pytest.raises(KeyMismatchError):
        crypto.paillier_add(c1, c2)
    with pytest.raises(KeyMismatchError):
        crypto.paillier_decrypt(other, c1)
    r = crypto.rsa_encrypt(rk, 3)
    with pytest.raises(SchemeMismatchError):
        crypto.paillier_decrypt(pk, r)
    with pytest.raises(SchemeMismatchError):
        crypto.rsa_mul(r, c1)


def test_rsa_basics(rk):
    dec = lambda c: crypto.rsa_decrypt(rk, c)
    e = lambda m: crypto.rsa_encrypt(rk.public, m)
    assert dec(e(6)) == 6
    assert dec(crypto.rsa_mul(e(3), e(4))) == 12
    assert dec(crypto.rsa_pow(e(2), 10)) == 1024
    assert dec(crypto.rsa_pow(e(2), 0)) == 1
    assert dec(crypto.rsa_mul(e(12), crypto.rsa_inverse(e(4)))) == 3
    with pytest.raises(ParameterError):
        crypto.rsa_pow(e(2), -1)
    with pytest.raises(ParameterError):
        e(rk.p)  # not a unit


def test_rsa_random_products_and_powers(rk):
    rng = random.Random(2)
    n = rk.public.n
    for _ in range(100):
        a, b = rng.randrange(2, 1 << 250), rng.randrange(2, 1 << 250)
        prod = crypto.rsa_mul(crypto.rsa_encrypt(rk, a), crypto.rsa_encrypt(rk, b))
        assert crypto.rsa_decrypt(rk, prod) == a * b
    for _ in range(20):
        m = rng.randrange(2, 1 << 70)
        assert crypto.rsa_decrypt(rk, crypto.rsa_pow(crypto.rsa_encrypt(rk, m), 7)) == m**7 < n


def test_rsa_pow_equals_repeated_multiplication(rk):
    c = crypto.rsa_encrypt(rk, 3)
    chain = crypto.rsa_encrypt(rk, 1)
    for k in range(21):
        assert crypto.rsa_decrypt(rk, crypto.rsa_pow(c, k)) == crypto.rsa_decrypt(rk, chain)
        chain = crypto.rsa_mul(chain, c)


def test_fixed_point_examples(pk):
    n = pk.public.n
    codec = FixedPointCodec(n)
    assert crypto.fp_encode(3.14, codec) == 314
    assert crypto.fp_encode(-2.5, codec) == n - 250
    assert crypto.fp_decode(n - 250, codec) == -2.5
    assert abs(crypto.fp_decode(crypto.fp_encode(0.005, codec), codec) - 0.005) <= 0.005
    with pytest.raises(ParameterError):
        codec.encode(n, 1)


def test_fixed_point_error_bound(pk):
    import numpy as np

    codec = FixedPointCodec(pk.public.n)
    xs = np.random.default_rng(3).uniform(-1e4, 1e4, 10_000)
    err = max(abs(codec.decode(codec.encode(x)) - x) for x in xs)
    assert err <= 1 / (2 * codec.scale) + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=-(10**40), max_value=10**40), st.integers(min_value=-(10**30), max_value=10**30))
def test_signed_scalar_mul_property(keys, m, k):
    pk = keys["alice_paillier"]
    codec = FixedPointCodec(pk.public.n)
    c = crypto.paillier_encrypt(pk, codec.encode(m, 0))
    assert codec.signed(crypto.paillier_decrypt(pk, crypto.paillier_scalar_mul(c, k))) == k * m


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
def test_fixed_point_add_property(keys, a, b):
    pk = keys["alice_paillier"]
    s = crypto.paillier_add(crypto.encrypt_real(pk, a), crypto.encrypt_real(pk, b))
    assert abs(crypto.decrypt_real(pk, s) - (a + b)) <= 1 / crypto.DEFAULT_SCALE + 1e-9


def test_key_files_round_trip(tmp_path, pk, rk):
    for key in (pk, rk, pk.public, rk.public):
        path = tmp_path / "k.json"
        crypto.save_key(key, path)
        obj = json.loads(path.read_text())
        assert obj["scheme"] in (crypto.PAILLIER, crypto.RSA)
        assert set("+/=") & set(obj["n"]) == set()  # base64url without padding
        back = crypto.load_key(path)
        assert back.key_id == key.key_id
    back = crypto.load_key(tmp_path / "k.json")
    c = crypto.rsa_encrypt(back, 99)
    assert crypto.rsa_decrypt(rk, c) == 99
