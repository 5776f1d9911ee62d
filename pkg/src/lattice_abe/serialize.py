"""Binary container format for parameters, keys, policies and ciphertexts.

Every file starts with the magic ``LABE``, a little-endian u16 format version
and a u8 type tag, followed by the object's fields in order. Counts are
little-endian; matrix entries use the fixed-width big-endian layout from
``zq``; strings are u32-length-prefixed UTF-8.
"""

from __future__ import annotations

import struct
from fractions import Fraction

from .lsss import SharePolicy
from .params import SystemParams, check_restrictions, PROFILES
from .sampling import ErrorParam, GaussParam
from .scheme import Ciphertext, MasterSecretKey, PublicParams, UserSecretKey
from .trapdoor import Preimage, TrapdoorPair
from .zq import (
    Modulus, Reader, encode_int, encode_matrix, encode_signed_matrix,
    encode_vector, read_matrix, read_signed_matrix, read_vector,
)

MAGIC = b"LABE"
VERSION = 1

TAG_PARAMS = 1
TAG_PUBLIC = 2
TAG_MASTER = 3
TAG_USER_KEY = 4
TAG_CIPHERTEXT = 5
TAG_CIPHERTEXTS = 6
TAG_POLICY = 7

# sanity limits on decoded dimensions, far above anything the calculator emits
MAX_N = 1 << 16
MAX_M = 1 << 24

_TAG_NAMES = {
    TAG_PARAMS: "parameters", TAG_PUBLIC: "public parameters", TAG_MASTER: "master key",
    TAG_USER_KEY: "user key", TAG_CIPHERTEXT: "ciphertext", TAG_CIPHERTEXTS: "ciphertext container",
    TAG_POLICY: "policy",
}


class FormatError(ValueError):
    """Malformed, truncated or mismatched serialized data."""


def _header(tag: int) -> bytes:
    return MAGIC + struct.pack("<HB", VERSION, tag)


def _str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _read_str(rd: Reader) -> str:
    (ln,) = rd.unpack("<I")
    return rd.take(ln).decode("utf-8")


def _frac(x: Fraction) -> bytes:
    x = Fraction(x)
    if x < 0:
        raise ValueError("only nonnegative fractions are encoded")
    return encode_int(x.numerator) + encode_int(x.denominator)


def _read_frac(rd: Reader) -> Fraction:
    num = rd.read_int()
    den = rd.read_int()
    if den == 0:
        raise FormatError("zero denominator")
    return Fraction(num, den)


def _open(data: bytes, tag: int) -> Reader:
    if len(data) < 7 or data[:4] != MAGIC:
        raise FormatError("not a LABE file (bad magic)")
    version, got = struct.unpack("<HB", data[4:7])
    if version != VERSION:
        raise FormatError(f"unsupported format version {version}")
    if got != tag:
        want = _TAG_NAMES.get(tag, tag)
        have = _TAG_NAMES.get(got, f"tag {got}")
        raise FormatError(f"expected {want}, found {have}")
    return Reader(data, 7)


def _decode(data: bytes, tag: int, body):
    """Run a body reader, mapping every low-level failure to FormatError."""
    try:
        rd = _open(bytes(data), tag)
        obj = body(rd)
        if not rd.at_end():
            raise FormatError("trailing bytes")
        return obj
    except FormatError:
        raise
    except (EOFError, ValueError, UnicodeDecodeError, struct.error, OverflowError) as exc:
        raise FormatError(f"malformed {_TAG_NAMES[tag]}: {exc}") from exc


def file_tag(data: bytes) -> int | None:
    if len(data) >= 7 and data[:4] == MAGIC:
        return data[6]
    return None


# -- parameters --------------------------------------------------------------

def _params_body(p: SystemParams) -> bytes:
    return b"".join([
        _str(p.profile),
        struct.pack("<IIIII", p.lambda_, p.n, p.m, p.cap_l, p.c_omega),
        encode_int(p.q.q),
        _frac(p.sigma.sigma), _frac(Fraction(p.sigma.tail_cut)),
        _frac(p.alpha.alpha),
    ])


def _read_params(rd: Reader) -> SystemParams:
    profile = _read_str(rd)
    if profile not in PROFILES:
        raise FormatError(f"unknown profile {profile!r}")
    lam, n, m, cap_l, c_omega = rd.unpack("<IIIII")
    if n > MAX_N or m > MAX_M or c_omega > 64:
        raise FormatError("parameter dimensions out of range")
    q = Modulus(rd.read_int())
    sigma = _read_frac(rd)
    tail = _read_frac(rd)
    alpha = _read_frac(rd)
    p = SystemParams(lam, n, m, q, GaussParam(sigma, tail_cut=float(tail)), ErrorParam(alpha, q),
                     cap_l, c_omega, profile)
    if GaussParam(sigma).sigma != sigma:
        raise FormatError("sigma is not on the fixed-point grid")
    failed = [k for k, ok in check_restrictions(p).items() if not ok]
    if failed:
        raise FormatError(f"parameters violate: {', '.join(failed)}")
    return p


def encode_params(p: SystemParams) -> bytes:
    return _header(TAG_PARAMS) + _params_body(p)


def decode_params(data: bytes) -> SystemParams:
    return _decode(data, TAG_PARAMS, _read_params)


# -- public parameters and master key ----------------------------------------

def encode_public(pp: PublicParams) -> bytes:
    return b"".join([_header(TAG_PUBLIC), _params_body(pp.params), encode_matrix(pp.a0),
                     encode_matrix(pp.b), encode_vector(pp.s), pp.attr_seed])


def decode_public(data: bytes) -> PublicParams:
    def body(rd):
        params = _read_params(rd)
        a0, b, s = read_matrix(rd), read_matrix(rd), read_vector(rd)
        for obj in (a0, b, s):
            if obj.modulus != params.q:
                raise FormatError("modulus mismatch inside public parameters")
        return PublicParams(params, a0, b, s, rd.take(32))
    return _decode(data, TAG_PUBLIC, body)


def encode_master(msk: MasterSecretKey) -> bytes:
    pair = msk.t_a0
    return b"".join([_header(TAG_MASTER), encode_matrix(pair.matrix_a),
                     encode_signed_matrix(pair.basis_t.tolist(), pair.m, pair.modulus)])


def decode_master(data: bytes) -> MasterSecretKey:
    def body(rd):
        a = read_matrix(rd)
        rows, ncols, modulus = read_signed_matrix(rd)
        if modulus != a.modulus or len(rows) != a.ncols or ncols != a.ncols:
            raise FormatError("trapdoor basis does not match its matrix")
        return MasterSecretKey(TrapdoorPair(a, rows))
    return _decode(data, TAG_MASTER, body)


# -- policies and user keys --------------------------------------------------

def _policy_body(policy: SharePolicy) -> bytes:
    out = [struct.pack("<II", policy.l, policy.n_cols), encode_matrix(policy.matrix_m)]
    out.extend(_str(a) for a in policy.rho)
    return b"".join(out)


def _read_policy(rd: Reader) -> SharePolicy:
    l, n_cols = rd.unpack("<II")
    mat = read_matrix(rd)
    if mat.shape != (l, n_cols):
        raise FormatError("policy matrix shape does not match its header")
    return SharePolicy(mat, tuple(_read_str(rd) for _ in range(l)))


def encode_policy(policy: SharePolicy) -> bytes:
    return _header(TAG_POLICY) + _policy_body(policy)


def decode_policy(data: bytes) -> SharePolicy:
    return _decode(data, TAG_POLICY, _read_policy)


def encode_user_key(sk: UserSecretKey) -> bytes:
    out = [_header(TAG_USER_KEY), _policy_body(sk.policy)]
    modulus = sk.policy.modulus
    for row in sk.grid:
        out.append(struct.pack("<I", len(row)))
        for pre in row:
            out.append(encode_vector(pre.target_u))
            out.append(struct.pack("<d", pre.norm_bound))
            out.append(encode_signed_matrix([pre.vector_e], pre.dim, modulus))
    return b"".join(out)


def decode_user_key(data: bytes, pp: PublicParams | None = None) -> UserSecretKey:
    def body(rd):
        policy = _read_policy(rd)
        grid = []
        for _ in range(policy.l):
            (count,) = rd.unpack("<I")
            if count > policy.l:
                raise FormatError("too many preimages in a key row")
            row = []
            for _ in range(count):
                target = read_vector(rd)
                (bound,) = rd.unpack("<d")
                rows, _, modulus = read_signed_matrix(rd)
                if len(rows) != 1 or modulus != policy.modulus or target.modulus != modulus:
                    raise FormatError("malformed preimage")
                row.append(Preimage(tuple(rows[0]), target, bound))
            grid.append(tuple(row))
        sk = UserSecretKey(policy, tuple(grid))
        if pp is not None:
            check_user_key(pp, sk)
        return sk
    return _decode(data, TAG_USER_KEY, body)


def check_user_key(pp: PublicParams, sk: UserSecretKey):
    if sk.policy.modulus != pp.modulus:
        raise FormatError("key modulus does not match the public parameters")
    if sk.policy.l != pp.params.cap_l:
        raise FormatError("key policy size does not match L")
    for row in sk.grid:
        for pre in row:
            if pre.dim != 2 * pp.params.m or pre.target_u.dim != pp.params.n:
                raise FormatError("key dimensions do not match the public parameters")


# -- ciphertexts -------------------------------------------------------------

def _ct_body(ct: Ciphertext) -> bytes:
    out = [struct.pack("<I", len(ct.attrs))]
    out.extend(_str(a) for a in ct.attrs)
    out.append(encode_int(ct.c0))
    out.append(encode_vector(ct.c_prime))
    out.extend(encode_vector(ct.c_attrs[a]) for a in ct.attrs)
    return b"".join(out)


def _read_ct(rd: Reader, pp: PublicParams | None) -> Ciphertext:
    (count,) = rd.unpack("<I")
    if count == 0 or count > len(rd.data):
        raise FormatError("bad attribute count")
    attrs = tuple(_read_str(rd) for _ in range(count))
    c0 = rd.read_int()
    c_prime = read_vector(rd)
    comps = {a: read_vector(rd) for a in attrs}
    if len(comps) != len(attrs):
        raise FormatError("duplicate attribute in ciphertext")
    modulus = c_prime.modulus
    if not 0 <= c0 < modulus.q or any(v.modulus != modulus or v.dim != c_prime.dim
                                      for v in comps.values()):
        raise FormatError("inconsistent ciphertext components")
    if pp is not None and (modulus != pp.modulus or c_prime.dim != pp.params.m):
        raise FormatError("ciphertext does not match the public parameters")
    return Ciphertext(attrs, c0, c_prime, comps)


def encode_ciphertext(ct: Ciphertext) -> bytes:
    return _header(TAG_CIPHERTEXT) + _ct_body(ct)


def decode_ciphertext(data: bytes, pp: PublicParams | None = None) -> Ciphertext:
    return _decode(data, TAG_CIPHERTEXT, lambda rd: _read_ct(rd, pp))


def encode_ciphertexts(cts: list[Ciphertext]) -> bytes:
    """Container for a byte payload: payload length, then one ciphertext per bit."""
    if len(cts) % 8:
        raise ValueError("a byte payload needs a multiple of 8 ciphertexts")
    out = [_header(TAG_CIPHERTEXTS), struct.pack("<I", len(cts) // 8)]
    out.extend(_ct_body(ct) for ct in cts)
    return b"".join(out)


def decode_ciphertexts(data: bytes, pp: PublicParams | None = None) -> list[Ciphertext]:
    def body(rd):
        (nbytes,) = rd.unpack("<I")
        return [_read_ct(rd, pp) for _ in range(8 * nbytes)]
    return _decode(data, TAG_CIPHERTEXTS, body)
