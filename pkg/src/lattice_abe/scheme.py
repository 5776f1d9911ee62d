"""Setup, KeyGen, Encrypt and Decrypt for the key-policy ABE scheme.

Public parameters hold A0 (with trapdoor in the master key), B, the share
target vector s in Z_q^L and a seed from which the matrix A_attr of any
attribute string is derived on demand. A user key for a policy (M, rho)
padded to L rows holds, for every real row i and every j < L, a short
preimage e with ``(A0 || A_rho(i) + B) e = lambda_i^(j) * unit_j`` where
``lambda^(j) = M y_j`` and ``y_j`` starts with s_j. A ciphertext under an
attribute set S carries ``C0 = x.f + chi0 + floor(q/2) msg`` (f is s padded
with zeros), ``C' = x A0 + chi'`` and ``C_a = x (A_a + B) + chi_a`` for every
a in S; decryption telescopes the preimages back to ``x.f``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

from .lsss import PAD_LABEL, SharePolicy, find_reconstruction
from .params import SystemParams
from .sampling import RandomSource, sample_error, sample_error_vec
from .trapdoor import Preimage, TrapdoorPair, extend_pair, sample_pre, trap_gen
from .zq import (
    DimensionError, ZqMatrix, ZqVector, centered, concat_cols, mat_vec, vec_mat,
)

MAX_PAYLOAD = 1 << 16
_ATTR_DOMAIN = b"lattice-abe attr-matrix v1"
_ID_DOMAIN = b"lattice-abe attr-id v1"


class ReservedAttribute(ValueError):
    pass


class MissingComponent(ValueError):
    """The ciphertext lacks the component for an attribute it claims."""


def check_attribute(attr: str) -> str:
    if not isinstance(attr, str) or not attr:
        raise ValueError("attributes must be nonempty strings")
    if attr == PAD_LABEL:
        raise ReservedAttribute(f"{PAD_LABEL!r} is reserved for padding rows")
    return attr


def _attr_input(domain: bytes, seed: bytes, attr: str) -> bytes:
    raw = attr.encode("utf-8")
    return domain + seed + struct.pack("<I", len(raw)) + raw


@dataclass(frozen=True, eq=False)
class PublicParams:
    params: SystemParams
    a0: ZqMatrix
    b: ZqMatrix
    s: ZqVector
    attr_seed: bytes
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n, m = self.params.n, self.params.m
        if self.a0.shape != (n, m) or self.b.shape != (n, m):
            raise DimensionError("A0 and B must be n x m")
        if self.s.dim != self.params.cap_l:
            raise DimensionError("s must have dimension L")
        if len(self.attr_seed) != 32:
            raise ValueError("attr_seed must be 32 bytes")

    @property
    def modulus(self):
        return self.params.q

    def attr_plus_b(self, attr: str) -> ZqMatrix:
        """A_attr + B, cached per attribute."""
        key = ("apb", attr)
        if key not in self._cache:
            self._cache[key] = attr_matrix(self, attr) + self.b
        return self._cache[key]


@dataclass(frozen=True, eq=False)
class MasterSecretKey:
    t_a0: TrapdoorPair


@dataclass(frozen=True, eq=False)
class UserSecretKey:
    """Preimage grid: ``grid[i][j]`` is e^(j) for policy row i.

    Padding rows hold no preimages; their shares are identically zero and
    never take part in a reconstruction.
    """

    policy: SharePolicy
    grid: tuple[tuple[Preimage, ...], ...]

    def __post_init__(self):
        if len(self.grid) != self.policy.l:
            raise DimensionError("grid needs one row per policy row")
        for label, row in zip(self.policy.rho, self.grid):
            want = 0 if label == PAD_LABEL else self.policy.l
            if len(row) != want:
                raise DimensionError(f"grid row for {label!r} has {len(row)} preimages")

    @cached_property
    def row_sums(self) -> tuple[tuple[int, ...], ...]:
        """sum_j e^(j) for each row (empty for padding rows)."""
        out = []
        for row in self.grid:
            if not row:
                out.append(())
                continue
            out.append(tuple(sum(col) for col in zip(*(p.vector_e for p in row))))
        return tuple(out)


@dataclass(frozen=True)
class Ciphertext:
    attrs: tuple[str, ...]
    c0: int
    c_prime: ZqVector
    c_attrs: Mapping[str, ZqVector]

    def __post_init__(self):
        if set(self.attrs) != set(self.c_attrs) or len(set(self.attrs)) != len(self.attrs):
            raise ValueError("ciphertext components must be keyed exactly by its attributes")


# -- large universe ----------------------------------------------------------

def attr_matrix(pp: PublicParams, attr: str) -> ZqMatrix:
    """Deterministic n x m matrix for an attribute string.

    SHAKE-256 of (attr_seed, attr) is cut into fixed-width big-endian chunks,
    masked to the bit length of q and rejection-sampled below q.
    """
    check_attribute(attr)
    n, m, q = pp.params.n, pp.params.m, pp.modulus.q
    width = pp.modulus.entry_bytes
    mask = (1 << q.bit_length()) - 1
    xof = hashlib.shake_256(_attr_input(_ATTR_DOMAIN, pp.attr_seed, attr))
    need = n * m
    length = 2 * need * width + 64
    while True:
        stream = xof.digest(length)
        vals = []
        for off in range(0, len(stream) - width + 1, width):
            v = int.from_bytes(stream[off:off + width], "big") & mask
            if v < q:
                vals.append(v)
                if len(vals) == need:
                    rows = tuple(tuple(vals[i * m:(i + 1) * m]) for i in range(n))
                    return ZqMatrix(rows, n, m, pp.modulus)
        length *= 2


def attribute_id(pp: PublicParams, attr: str) -> int:
    """Hash of an attribute string into Z_q, for display and indexing."""
    check_attribute(attr)
    raw = hashlib.shake_256(_attr_input(_ID_DOMAIN, pp.attr_seed, attr))
    return int.from_bytes(raw.digest(pp.modulus.entry_bytes + 16), "big") % pp.modulus.q


def attr_block(pp: PublicParams, attr: str) -> ZqMatrix:
    """E_attr = A0 || (A_attr + B)."""
    return concat_cols(pp.a0, pp.attr_plus_b(attr))


# -- algorithms --------------------------------------------------------------

def _uniform_vec(dim: int, pp: PublicParams, rng: RandomSource) -> ZqVector:
    q = pp.modulus.q
    return ZqVector(tuple(rng.randbelow(q) for _ in range(dim)), pp.modulus)


def setup(params: SystemParams, rng: RandomSource) -> tuple[PublicParams, MasterSecretKey]:
    pair = trap_gen(params.n, params.m, params.q, rng)
    q = params.q.q
    b = ZqMatrix(tuple(tuple(rng.randbelow(q) for _ in range(params.m))
                       for _ in range(params.n)), params.n, params.m, params.q)
    s = ZqVector(tuple(rng.randbelow(q) for _ in range(params.cap_l)), params.q)
    seed = rng.randbytes(32)
    return PublicParams(params, pair.matrix_a, b, s, seed), MasterSecretKey(pair)


def keygen(pp: PublicParams, msk: MasterSecretKey, policy: SharePolicy,
           rng: RandomSource) -> UserSecretKey:
    """Issue a key for a policy already padded to exactly L rows."""
    cap_l, n = pp.params.cap_l, pp.params.n
    if policy.l != cap_l:
        raise DimensionError(f"policy must have exactly L={cap_l} rows, got {policy.l}")
    if cap_l > n:
        raise DimensionError("L must not exceed n")
    if policy.modulus.q != pp.modulus.q:
        raise ValueError("policy was compiled for a different modulus")
    if msk.t_a0.matrix_a != pp.a0:
        raise ValueError("master key does not match the public parameters")
    q = pp.modulus.q

    # lambda^(j) = M y_j with y_j = (s_j, uniform...)
    shares = []
    for j in range(cap_l):
        y = (pp.s[j],) + tuple(rng.randbelow(q) for _ in range(policy.n_cols - 1))
        shares.append(mat_vec(policy.matrix_m, y))

    extended: dict[str, TrapdoorPair] = {}
    grid = []
    for i, label in enumerate(policy.rho):
        if label == PAD_LABEL:
            if any(shares[j][i] for j in range(cap_l)):
                raise ValueError("padding rows must be zero")
            grid.append(())
            continue
        check_attribute(label)
        if label not in extended:
            extended[label] = extend_pair(msk.t_a0, pp.attr_plus_b(label))
        pair = extended[label]
        row = []
        for j in range(cap_l):
            target = [0] * n
            target[j] = shares[j][i]
            row.append(sample_pre(pair, ZqVector(tuple(target), pp.modulus),
                                  pp.params.sigma, rng, pp.params.c_omega))
        grid.append(tuple(row))
    return UserSecretKey(policy, tuple(grid))


def normalize_attrs(attrs: Iterable[str]) -> tuple[str, ...]:
    out = tuple(sorted({check_attribute(a) for a in attrs}))
    if not out:
        raise ValueError("attribute set must be nonempty")
    return out


def encrypt(pp: PublicParams, attrs: Iterable[str], msg: int, rng: RandomSource,
            zero_noise: bool = False) -> Ciphertext:
    """Encrypt one bit under an attribute set.

    ``zero_noise`` forces every error term to zero; it exists for tests of the
    decryption algebra and gives no security at all.
    """
    if msg not in (0, 1):
        raise ValueError("msg must be a single bit")
    attrs = normalize_attrs(attrs)
    params = pp.params
    q, m = pp.modulus.q, params.m
    x = _uniform_vec(params.n, pp, rng)
    f = tuple(pp.s.entries) + (0,) * (params.n - params.cap_l)

    def noise_vec() -> ZqVector:
        if zero_noise:
            return ZqVector.zeros(m, pp.modulus)
        return sample_error_vec(params.alpha, m, rng)

    chi0 = 0 if zero_noise else sample_error(params.alpha, rng)
    c0 = (sum(a * b for a, b in zip(x, f)) + chi0 + (q // 2) * msg) % q

    def masked(mat: ZqMatrix) -> ZqVector:
        base = vec_mat(x.entries, mat)
        noise = noise_vec()
        return ZqVector(tuple((a + e) % q for a, e in zip(base, noise)), pp.modulus)

    c_prime = masked(pp.a0)
    c_attrs = {a: masked(pp.attr_plus_b(a)) for a in attrs}
    return Ciphertext(attrs, c0, c_prime, c_attrs)


def decrypt_residue(pp: PublicParams, sk: UserSecretKey, ct: Ciphertext) -> int:
    """r = C0 - sum_j sum_{i in I} w_i (C' || C_rho(i)) e_i^(j), in [0, q).

    Reconstruction constants are solved first, so an unauthorized key fails
    before any ciphertext arithmetic.
    """
    weights = find_reconstruction(sk.policy, ct.attrs)
    q = pp.modulus.q
    m = pp.params.m
    for i in weights:
        if sk.policy.rho[i] not in ct.c_attrs:
            raise MissingComponent(f"no component for {sk.policy.rho[i]!r}")
    acc = 0
    for i, w in weights.items():
        if not w:
            continue
        e = sk.row_sums[i]
        if len(e) != 2 * m:
            raise DimensionError("key does not match the public parameters")
        c_attr = ct.c_attrs[sk.policy.rho[i]]
        val = sum(a * b for a, b in zip(ct.c_prime, e[:m]))
        val += sum(a * b for a, b in zip(c_attr, e[m:]))
        acc += w * val
    return (ct.c0 - acc) % q


def decode_residue(r: int, q: int) -> int:
    """0 if |centered(r)| < q/4, otherwise 1."""
    return 0 if 4 * abs(centered(r, q)) < q else 1


def decrypt(pp: PublicParams, sk: UserSecretKey, ct: Ciphertext) -> int:
    return decode_residue(decrypt_residue(pp, sk, ct), pp.modulus.q)


# -- byte payloads -----------------------------------------------------------

def payload_bits(payload: bytes) -> list[int]:
    return [(byte >> (7 - k)) & 1 for byte in payload for k in range(8)]


def bits_to_bytes(bits: list[int]) -> bytes:
    if len(bits) % 8:
        raise ValueError("bit count is not a multiple of 8")
    out = bytearray()
    for i in range(0, len(bits), 8):
        v = 0
        for b in bits[i:i + 8]:
            v = (v << 1) | b
        out.append(v)
    return bytes(out)


def encrypt_bits(pp: PublicParams, attrs: Iterable[str], payload: bytes, rng: RandomSource,
                 zero_noise: bool = False) -> list[Ciphertext]:
    """One ciphertext per payload bit (MSB first), each from its own forked stream."""
    if len(payload) > MAX_PAYLOAD:
        raise ValueError(f"payload exceeds {MAX_PAYLOAD} bytes")
    attrs = normalize_attrs(attrs)
    return [encrypt(pp, attrs, bit, rng.fork(idx), zero_noise)
            for idx, bit in enumerate(payload_bits(payload))]


def decrypt_bits(pp: PublicParams, sk: UserSecretKey, cts: list[Ciphertext]) -> bytes:
    return bits_to_bytes([decrypt(pp, sk, ct) for ct in cts])


def encrypt_bytes(pp: PublicParams, attrs: Iterable[str], payload: bytes, rng: RandomSource,
                  zero_noise: bool = False) -> bytes:
    """Encrypt a byte string into a serialized ciphertext container."""
    from .serialize import encode_ciphertexts

    return encode_ciphertexts(encrypt_bits(pp, attrs, payload, rng, zero_noise))


def decrypt_bytes(pp: PublicParams, sk: UserSecretKey, container: bytes) -> bytes:
    from .serialize import decode_ciphertexts

    return decrypt_bits(pp, sk, decode_ciphertexts(container, pp))
