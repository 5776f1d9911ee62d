"""Exact linear algebra over the prime field Z_q.

Matrices and vectors hold Python integers reduced into ``[0, q)``; nothing
here ever touches floating point, so moduli of any size are safe.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import flint


class NoSolution(ValueError):
    """The target vector is not in the row span of the given matrix."""


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Modulus:
    q: int

    def __post_init__(self):
        if not isinstance(self.q, int) or self.q < 2:
            raise ValueError(f"modulus must be an integer >= 2, got {self.q!r}")
        if not flint.fmpz(self.q).is_prime():
            raise ValueError(f"modulus {self.q} is not prime")

    @property
    def entry_bytes(self) -> int:
        return (self.q.bit_length() + 7) // 8

    def __int__(self):
        return self.q


def next_prime(x: int) -> int:
    """Smallest prime >= x."""
    p = max(2, x)
    if p > 2 and p % 2 == 0:
        p += 1
    while not flint.fmpz(p).is_prime():
        p += 1 if p == 2 else 2
    return p


@dataclass(frozen=True)
class ZqVector:
    entries: tuple[int, ...]
    modulus: Modulus

    def __post_init__(self):
        q = self.modulus.q
        if any(not 0 <= x < q for x in self.entries):
            raise ValueError("vector entries must lie in [0, q)")

    @classmethod
    def from_ints(cls, values: Iterable[int], modulus: Modulus) -> ZqVector:
        q = modulus.q
        return cls(tuple(int(v) % q for v in values), modulus)

    @classmethod
    def zeros(cls, dim: int, modulus: Modulus) -> ZqVector:
        return cls((0,) * dim, modulus)

    @property
    def dim(self) -> int:
        return len(self.entries)

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    def centered(self) -> list[int]:
        return [centered(x, self.modulus.q) for x in self.entries]


@dataclass(frozen=True)
class ZqMatrix:
    """Dense row-major matrix over Z_q.

    ``nrows``/``ncols`` are stored explicitly so that empty blocks keep their
    shape (a 3x0 matrix is a legal concatenation operand).
    """

    entries: tuple[tuple[int, ...], ...]
    nrows: int
    ncols: int
    modulus: Modulus

    def __post_init__(self):
        if len(self.entries) != self.nrows:
            raise DimensionError("row count does not match entries")
        q = self.modulus.q
        for row in self.entries:
            if len(row) != self.ncols:
                raise DimensionError("ragged matrix")
            if any(not 0 <= x < q for x in row):
                raise ValueError("matrix entries must lie in [0, q)")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], modulus: Modulus,
                  ncols: int | None = None) -> ZqMatrix:
        q = modulus.q
        ent = tuple(tuple(int(x) % q for x in r) for r in rows)
        if ncols is None:
            if not ent:
                raise DimensionError("ncols is required for a matrix with no rows")
            ncols = len(ent[0])
        return cls(ent, len(ent), ncols, modulus)

    @classmethod
    def zeros(cls, nrows: int, ncols: int, modulus: Modulus) -> ZqMatrix:
        return cls(((0,) * ncols,) * nrows, nrows, ncols, modulus)

    @classmethod
    def identity(cls, n: int, modulus: Modulus) -> ZqMatrix:
        rows = tuple(tuple(1 if i == j else 0 for j in range(n)) for i in range(n))
        return cls(rows, n, n, modulus)

    @property
    def shape(self) -> tuple[int, int]:
        return self.nrows, self.ncols

    def row(self, i: int) -> ZqVector:
        return ZqVector(self.entries[i], self.modulus)

    def column(self, j: int) -> ZqVector:
        return ZqVector(tuple(r[j] for r in self.entries), self.modulus)

    def transpose(self) -> ZqMatrix:
        cols = tuple(zip(*self.entries)) if self.nrows else ((),) * self.ncols
        return ZqMatrix(tuple(cols), self.ncols, self.nrows, self.modulus)

    def select_rows(self, idx: Sequence[int]) -> ZqMatrix:
        return ZqMatrix(tuple(self.entries[i] for i in idx), len(idx), self.ncols,
                        self.modulus)

    def column_block(self, start: int, stop: int) -> ZqMatrix:
        return ZqMatrix(tuple(r[start:stop] for r in self.entries), self.nrows,
                        stop - start, self.modulus)

    def __add__(self, other: ZqMatrix) -> ZqMatrix:
        _same_modulus(self.modulus, other.modulus)
        if self.shape != other.shape:
            raise DimensionError(f"cannot add {self.shape} and {other.shape}")
        q = self.modulus.q
        rows = tuple(tuple((a + b) % q for a, b in zip(r, s))
                     for r, s in zip(self.entries, other.entries))
        return ZqMatrix(rows, self.nrows, self.ncols, self.modulus)

    def __neg__(self) -> ZqMatrix:
        q = self.modulus.q
        rows = tuple(tuple((-a) % q for a in r) for r in self.entries)
        return ZqMatrix(rows, self.nrows, self.ncols, self.modulus)

    def __matmul__(self, other: ZqMatrix) -> ZqMatrix:
        return mat_mul(self, other)

    def to_flint(self) -> flint.fmpz_mat:
        return flint.fmpz_mat(self.nrows, self.ncols,
                              [x for r in self.entries for x in r])


def _same_modulus(a: Modulus, b: Modulus):
    if a.q != b.q:
        raise ValueError(f"modulus mismatch: {a.q} vs {b.q}")


def _from_flint(mat: flint.fmpz_mat, modulus: Modulus) -> ZqMatrix:
    q = modulus.q
    r, c = mat.nrows(), mat.ncols()
    flat = [int(x) % q for x in mat.entries()]
    rows = tuple(tuple(flat[i * c:(i + 1) * c]) for i in range(r))
    return ZqMatrix(rows, r, c, modulus)


def mat_mul(a: ZqMatrix, b: ZqMatrix) -> ZqMatrix:
    """Exact product ``a @ b`` reduced mod q."""
    _same_modulus(a.modulus, b.modulus)
    if a.ncols != b.nrows:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    if a.nrows == 0 or b.ncols == 0 or a.ncols == 0:
        return ZqMatrix.zeros(a.nrows, b.ncols, a.modulus)
    return _from_flint(a.to_flint() * b.to_flint(), a.modulus)


def mat_vec(a: ZqMatrix, x: Sequence[int]) -> ZqVector:
    """``a @ x`` for an integer vector x (signed entries allowed)."""
    if len(x) != a.ncols:
        raise DimensionError(f"cannot multiply {a.shape} by vector of dim {len(x)}")
    q = a.modulus.q
    return ZqVector(tuple(sum(r * int(v) for r, v in zip(row, x)) % q
                          for row in a.entries), a.modulus)


def vec_mat(x: Sequence[int], a: ZqMatrix) -> ZqVector:
    """Row vector times matrix, ``x^T a``."""
    if len(x) != a.nrows:
        raise DimensionError(f"cannot multiply vector of dim {len(x)} by {a.shape}")
    q = a.modulus.q
    acc = [0] * a.ncols
    for xi, row in zip(x, a.entries):
        if xi:
            xi = int(xi)
            acc = [s + xi * v for s, v in zip(acc, row)]
    return ZqVector(tuple(s % q for s in acc), a.modulus)


def dot(x: Sequence[int], y: Sequence[int], q: int) -> int:
    if len(x) != len(y):
        raise DimensionError("dot product of unequal lengths")
    return sum(int(a) * int(b) for a, b in zip(x, y)) % q


def concat_cols(x: ZqMatrix, y: ZqMatrix) -> ZqMatrix:
    """``(x || y)``: columns of x followed by columns of y."""
    _same_modulus(x.modulus, y.modulus)
    if x.nrows != y.nrows:
        raise DimensionError(f"row counts differ: {x.nrows} vs {y.nrows}")
    rows = tuple(r + s for r, s in zip(x.entries, y.entries))
    return ZqMatrix(rows, x.nrows, x.ncols + y.ncols, x.modulus)


def concat_rows(x: ZqMatrix, y: ZqMatrix) -> ZqMatrix:
    """``(x; y)``: rows of x stacked on top of rows of y."""
    _same_modulus(x.modulus, y.modulus)
    if x.ncols != y.ncols:
        raise DimensionError(f"column counts differ: {x.ncols} vs {y.ncols}")
    return ZqMatrix(x.entries + y.entries, x.nrows + y.nrows, x.ncols, x.modulus)


def centered(x: int, q: int) -> int:
    """Representative of x mod q in (-q/2, q/2]."""
    x %= q
    return x - q if 2 * x > q else x


def row_reduce(rows: list[list[int]], q: int, ncols: int):
    """Reduced row echelon form in place; returns the pivot column list."""
    pivots = []
    r = 0
    nrows = len(rows)
    for c in range(ncols):
        if r == nrows:
            break
        p = next((i for i in range(r, nrows) if rows[i][c]), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        inv = pow(rows[r][c], -1, q)
        rows[r] = [(v * inv) % q for v in rows[r]]
        for i in range(nrows):
            if i != r and rows[i][c]:
                f = rows[i][c]
                rows[i] = [(a - f * b) % q for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
    return pivots


def solve_row_combination(m_i: ZqMatrix, target: ZqVector) -> ZqVector:
    """Find w with ``w^T m_i = target^T`` (mod q).

    Gaussian elimination on the transposed system ``m_i^T w = target``; free
    variables are set to zero. Raises NoSolution if target is outside the row
    span of m_i.
    """
    _same_modulus(m_i.modulus, target.modulus)
    if target.dim != m_i.ncols:
        raise DimensionError(f"target dim {target.dim} != {m_i.ncols} columns")
    q = m_i.modulus.q
    k = m_i.nrows
    # augmented [m_i^T | target]: one equation per column of m_i
    aug = [[m_i.entries[r][c] for r in range(k)] + [target[c]] for c in range(m_i.ncols)]
    pivots = row_reduce(aug, q, k + 1)
    if k in pivots:
        raise NoSolution("target is not in the row span")
    w = [0] * k
    for row, c in zip(aug, pivots):
        w[c] = row[k]
    return ZqVector(tuple(w), m_i.modulus)


def solve_columns(a: ZqMatrix, targets: ZqMatrix) -> list[list[int]]:
    """Solve ``a @ X = targets`` (mod q) for X with entries in [0, q).

    Requires the columns of ``a`` to generate Z_q^n. Returns X as a list of
    rows (a.ncols x targets.ncols); only pivot rows are nonzero.
    """
    _same_modulus(a.modulus, targets.modulus)
    if targets.nrows != a.nrows:
        raise DimensionError("target rows must match matrix rows")
    q = a.modulus.q
    aug = [list(ra) + list(rt) for ra, rt in zip(a.entries, targets.entries)]
    pivots = row_reduce(aug, q, a.ncols)
    if len(pivots) < a.nrows:
        raise NoSolution("columns do not generate Z_q^n")
    x = [[0] * targets.ncols for _ in range(a.ncols)]
    for row, c in zip(aug, pivots):
        x[c] = row[a.ncols:]
    return x


# -- binary encoding ---------------------------------------------------------
#
# u64 LE rows, u64 LE cols, q as u32-LE-length-prefixed big-endian bytes, then
# entries row-major as fixed-width big-endian of ceil(bitlen(q)/8) bytes.
# Signed integer matrices use the same layout with two's-complement entries.

def encode_int(x: int) -> bytes:
    raw = x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")
    return struct.pack("<I", len(raw)) + raw


def encode_matrix(mat: ZqMatrix) -> bytes:
    w = mat.modulus.entry_bytes
    out = [struct.pack("<QQ", mat.nrows, mat.ncols), encode_int(mat.modulus.q)]
    out.extend(x.to_bytes(w, "big") for r in mat.entries for x in r)
    return b"".join(out)


def encode_vector(vec: ZqVector) -> bytes:
    """A vector is encoded as a 1 x dim matrix."""
    return encode_matrix(ZqMatrix((vec.entries,), 1, vec.dim, vec.modulus))


def encode_signed_matrix(rows: Sequence[Sequence[int]], ncols: int, modulus: Modulus) -> bytes:
    w = modulus.entry_bytes
    lim = 1 << (8 * w - 1)
    out = [struct.pack("<QQ", len(rows), ncols), encode_int(modulus.q)]
    for r in rows:
        for x in r:
            x = int(x)
            if not -lim <= x < lim:
                raise OverflowError(f"entry {x} does not fit in {w} signed bytes")
            out.append(x.to_bytes(w, "big", signed=True))
    return b"".join(out)


class Reader:
    """Cursor over a byte string; raises EOFError on truncation."""

    def __init__(self, data: bytes, pos: int = 0):
        self.data = memoryview(data)
        self.pos = pos

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise EOFError("truncated input")
        chunk = bytes(self.data[self.pos:self.pos + n])
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def read_int(self) -> int:
        (ln,) = self.unpack("<I")
        return int.from_bytes(self.take(ln), "big")

    def at_end(self) -> bool:
        return self.pos == len(self.data)


def _read_header(rd: Reader):
    nrows, ncols = rd.unpack("<QQ")
    q = rd.read_int()
    modulus = Modulus(q)
    w = modulus.entry_bytes
    if nrows * ncols * w > len(rd.data) - rd.pos:
        raise EOFError("truncated matrix body")
    return nrows, ncols, modulus, w


def read_matrix(rd: Reader) -> ZqMatrix:
    nrows, ncols, modulus, w = _read_header(rd)
    body = rd.take(nrows * ncols * w)
    flat = [int.from_bytes(body[i:i + w], "big") for i in range(0, len(body), w)]
    rows = tuple(tuple(flat[i * ncols:(i + 1) * ncols]) for i in range(nrows))
    return ZqMatrix(rows, nrows, ncols, modulus)


def read_vector(rd: Reader) -> ZqVector:
    mat = read_matrix(rd)
    if mat.nrows != 1:
        raise ValueError("encoded vector must have exactly one row")
    return ZqVector(mat.entries[0], mat.modulus)


def read_signed_matrix(rd: Reader) -> tuple[list[list[int]], int, Modulus]:
    nrows, ncols, modulus, w = _read_header(rd)
    body = rd.take(nrows * ncols * w)
    flat = [int.from_bytes(body[i:i + w], "big", signed=True)
            for i in range(0, len(body), w)]
    return [flat[i * ncols:(i + 1) * ncols] for i in range(nrows)], ncols, modulus


def decode_matrix(data: bytes) -> ZqMatrix:
    rd = Reader(data)
    mat = read_matrix(rd)
    if not rd.at_end():
        raise ValueError("trailing bytes after matrix")
    return mat
