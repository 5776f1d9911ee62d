import struct
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import seeded
from lattice_abe.lsss import compile_lsss, parse_policy
from lattice_abe.params import select_params
from lattice_abe.sampling import GaussParam
from lattice_abe.scheme import decrypt, encrypt, encrypt_bits, keygen, setup
from lattice_abe.serialize import (
    MAGIC, TAG_CIPHERTEXT, TAG_CIPHERTEXTS, TAG_MASTER, TAG_PARAMS, TAG_POLICY, TAG_PUBLIC,
    TAG_USER_KEY, VERSION, FormatError, check_user_key, decode_ciphertext, decode_ciphertexts,
    decode_master, decode_params, decode_policy, decode_public, decode_user_key,
    encode_ciphertext, encode_ciphertexts, encode_master, encode_params, encode_policy,
    encode_public, encode_user_key, file_tag,
)
from lattice_abe.zq import Modulus


@pytest.fixture(scope="module")
def blobs(toy_system, and_key):
    pp, msk = toy_system
    ct = encrypt(pp, ["a", "b"], 1, seeded("ser-ct"))
    return {
        "params": encode_params(pp.params),
        "pp": encode_public(pp),
        "msk": encode_master(msk),
        "sk": encode_user_key(and_key),
        "ct": encode_ciphertext(ct),
        "policy": encode_policy(and_key.policy),
        "bundle": encode_ciphertexts(encrypt_bits(pp, ["a", "b"], b"\x5a", seeded("ser-b"))),
    }


DECODERS = {
    "params": (decode_params, TAG_PARAMS),
    "pp": (decode_public, TAG_PUBLIC),
    "msk": (decode_master, TAG_MASTER),
    "sk": (decode_user_key, TAG_USER_KEY),
    "ct": (decode_ciphertext, TAG_CIPHERTEXT),
    "policy": (decode_policy, TAG_POLICY),
    "bundle": (decode_ciphertexts, TAG_CIPHERTEXTS),
}


def test_header_layout(blobs):
    for name, (_, tag) in DECODERS.items():
        data = blobs[name]
        assert data[:4] == MAGIC
        assert struct.unpack("<HB", data[4:7]) == (VERSION, tag)
        assert file_tag(data) == tag
    assert file_tag(b"nope") is None


def test_params_round_trip(toy_system):
    pp, _ = toy_system
    assert decode_params(encode_params(pp.params)) == pp.params


def test_public_round_trip(toy_system):
    pp, _ = toy_system
    got = decode_public(encode_public(pp))
    assert got.params == pp.params and got.a0 == pp.a0 and got.b == pp.b
    assert got.s == pp.s and got.attr_seed == pp.attr_seed


def test_master_round_trip_issues_working_keys(toy_system):
    pp, msk = toy_system
    got = decode_master(encode_master(msk))
    assert got.t_a0.matrix_a == msk.t_a0.matrix_a
    assert np.array_equal(np.asarray(got.t_a0.basis_t), msk.t_a0.basis_t)
    policy = compile_lsss(parse_policy("a OR b"), pp.modulus)
    sk = keygen(pp, got, policy, seeded("from-decoded-msk"))
    assert decrypt(pp, sk, encrypt(pp, ["b"], 1, seeded("dm"))) == 1


def test_user_key_round_trip(toy_system, and_key):
    pp, _ = toy_system
    got = decode_user_key(encode_user_key(and_key), pp)
    assert got.policy == and_key.policy
    for a, b in zip(got.grid, and_key.grid):
        assert [p.vector_e for p in a] == [tuple(p.vector_e) for p in b]
        assert [p.target_u for p in a] == [p.target_u for p in b]
    ct = encrypt(pp, ["a", "b"], 1, seeded("uk"))
    assert decrypt(pp, got, ct) == 1


def test_ciphertext_round_trips(toy_system, blobs):
    pp, _ = toy_system
    ct = encrypt(pp, ["a", "b"], 1, seeded("ser-ct"))
    assert decode_ciphertext(blobs["ct"], pp) == ct
    cts = decode_ciphertexts(blobs["bundle"], pp)
    assert cts == encrypt_bits(pp, ["a", "b"], b"\x5a", seeded("ser-b"))
    with pytest.raises(ValueError):
        encode_ciphertexts(cts[:3])


def test_policy_round_trip():
    p = compile_lsss(parse_policy("a AND (b OR c)"), Modulus(97)).padded(5)
    assert decode_policy(encode_policy(p)) == p


@pytest.mark.parametrize("name", sorted(DECODERS))
def test_wrong_tag_magic_version_and_trailing_bytes(blobs, name):
    decode, _ = DECODERS[name]
    data = blobs[name]
    other = "ct" if name != "ct" else "sk"
    with pytest.raises(FormatError):
        decode(blobs[other])
    with pytest.raises(FormatError):
        decode(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        decode(data[:4] + struct.pack("<H", VERSION + 1) + data[6:])
    with pytest.raises(FormatError):
        decode(data + b"\x00")
    with pytest.raises(FormatError):
        decode(b"")


@pytest.mark.parametrize("name", ["params", "ct", "policy", "sk"])
def test_every_truncation_is_a_format_error(blobs, name):
    decode, _ = DECODERS[name]
    data = blobs[name]
    step = max(1, len(data) // 400)
    for cut in list(range(0, len(data), step)) + [len(data) - 1]:
        with pytest.raises(FormatError):
            decode(data[:cut])


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_random_corruption_never_escapes_as_another_error(blobs, data):
    name = data.draw(st.sampled_from(["params", "ct", "policy"]))
    blob = bytearray(blobs[name])
    pos = data.draw(st.integers(0, len(blob) - 1))
    blob[pos] ^= data.draw(st.integers(1, 255))
    decode, _ = DECODERS[name]
    try:
        decode(bytes(blob))
    except FormatError:
        pass


def test_params_violating_restrictions_are_rejected(toy_system):
    pp, _ = toy_system
    weak = replace(pp.params, sigma=GaussParam(Fraction(10)))
    with pytest.raises(FormatError):
        decode_params(encode_params(weak))


@pytest.fixture(scope="module")
def other_pp():
    pp, _ = setup(select_params(2, 2), seeded("other-public-params"))
    return pp


def test_key_checked_against_public_params(and_key, other_pp):
    with pytest.raises(FormatError):
        check_user_key(other_pp, and_key)
    with pytest.raises(FormatError):
        decode_user_key(encode_user_key(and_key), other_pp)


def test_ciphertext_checked_against_public_params(blobs, other_pp):
    with pytest.raises(FormatError):
        decode_ciphertext(blobs["ct"], other_pp)


@pytest.mark.parametrize("field,value", [(1, 1 << 31), (2, 1 << 31), (2, (1 << 24) - 1),
                                         (1, (1 << 16) - 1), (4, 1 << 20)])
def test_oversized_dimension_fields_fail_fast(blobs, field, value):
    # header (7 bytes) + length-prefixed profile name, then lambda, n, m, L, c_omega
    data = bytearray(blobs["params"])
    start = 7 + 4 + struct.unpack("<I", data[7:11])[0]
    struct.pack_into("<I", data, start + 4 * field, value)
    with pytest.raises(FormatError):
        decode_params(bytes(data))
