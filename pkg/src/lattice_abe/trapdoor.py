"""Trapdoor lattices: generation, basis extension and Gaussian preimage sampling.

Bases are square signed-integer matrices (numpy int64, columns are basis
vectors) living over Z, never reduced mod q. Every basis this module builds is
block upper triangular after a row permutation: a dense gadget trapdoor block
followed by unit columns added by basis extension. Both the exact Gram-Schmidt
computation and the nearest-plane sampler walk that block structure, so a
2m-dimensional extended basis costs about as much as its dense core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import flint
import numpy as np

from .sampling import DEFAULT_TAIL_CUT, GaussParam, RandomSource, sample_z_float
from .zq import (
    DimensionError, Modulus, NoSolution, ZqMatrix, ZqVector, row_reduce, concat_cols, mat_vec,
    solve_columns,
)

C_OMEGA = 2
_INT64_SAFE = 1 << 62
# extended pairs kept per trapdoor by sample_left; each holds a 2m x 2m basis
_EXTENSION_CACHE = 8


class TrapdoorError(ValueError):
    pass


class RankDeficient(TrapdoorError):
    pass


class GaussianTooSmall(TrapdoorError):
    pass


# -- block structure ---------------------------------------------------------

def block_structure(t: np.ndarray) -> list[tuple[np.ndarray, int, int]]:
    """Split a square matrix into diagonal blocks of a block-triangular form.

    Returns ``(rows, col_start, col_stop)`` triples in column order. Each
    block's columns are supported only on its own rows plus rows of earlier
    blocks, so after permuting rows the matrix is block upper triangular and
    its Gram-Schmidt vectors are those of the diagonal blocks. A dense matrix
    comes back as a single block.
    """
    t = np.asarray(t)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {t.shape}")
    k = t.shape[0]
    covered = np.zeros(k, dtype=bool)
    blocks = []
    start = 0
    pending: set[int] = set()
    for j in range(k):
        rows = np.flatnonzero(t[:, j])
        pending.update(rows[~covered[rows]].tolist())
        if len(pending) == j - start + 1:
            r = np.array(sorted(pending), dtype=np.intp)
            blocks.append((r, start, j + 1))
            covered[r] = True
            pending = set()
            start = j + 1
    if start != k:
        raise RankDeficient("matrix is rank deficient")
    return blocks


def _bareiss_leading_minors(g: list[list[int]]) -> list[int]:
    """Leading principal minors by fraction-free elimination without pivoting."""
    a = [row[:] for row in g]
    k = len(a)
    minors = []
    prev = 1
    for i in range(k):
        piv = a[i][i]
        minors.append(piv)
        if piv == 0:
            break
        for r in range(i + 1, k):
            for c in range(i + 1, k):
                a[r][c] = (a[r][c] * piv - a[r][i] * a[i][c]) // prev
        prev = piv
    return minors


def _block_sq_norms(d: np.ndarray) -> list[Fraction]:
    if d.shape == (1, 1):
        v = int(d[0, 0])
        if v == 0:
            raise RankDeficient("zero pivot")
        return [Fraction(v * v)]
    dm = flint.fmpz_mat(d.tolist())
    gram = dm.transpose() * dm
    perm, _, _, u = gram.fflu()
    if perm.is_one():
        minors = [int(u[i, i]) for i in range(gram.nrows())]
    else:
        g = [[int(gram[i, j]) for j in range(gram.ncols())] for i in range(gram.nrows())]
        minors = _bareiss_leading_minors(g)
    if len(minors) < d.shape[0] or any(x <= 0 for x in minors):
        raise RankDeficient("Gram matrix is singular")
    out = [Fraction(minors[0])]
    out += [Fraction(minors[i], minors[i - 1]) for i in range(1, len(minors))]
    return out


def gram_schmidt_sq_norms(t: np.ndarray) -> list[Fraction]:
    """Exact squared lengths of the Gram-Schmidt vectors of t's columns.

    Uses ``|b~_i|^2 = d_i / d_{i-1}`` where d_i are the leading principal
    minors of each diagonal block's Gram matrix.
    """
    t = np.asarray(t)
    out: list[Fraction] = []
    for rows, lo, hi in block_structure(t):
        out.extend(_block_sq_norms(t[np.ix_(rows, np.arange(lo, hi))]))
    return out


def sqrt_upper(x: Fraction) -> float:
    """A float r with r*r >= x exactly."""
    r = math.sqrt(float(x))
    while Fraction(r) ** 2 < x:
        r = math.nextafter(r, math.inf)
    return r


def gram_schmidt_norm(t: np.ndarray) -> float:
    """max_i |b~_i|, computed exactly and rounded up to a float."""
    return sqrt_upper(max(gram_schmidt_sq_norms(t)))


def abs_determinant(t: np.ndarray) -> int:
    t = np.asarray(t)
    det = 1
    for rows, lo, hi in block_structure(t):
        blk = t[np.ix_(rows, np.arange(lo, hi))]
        det *= abs(int(flint.fmpz_mat(blk.tolist()).det()))
    return det


def is_full_rank(t: np.ndarray) -> bool:
    try:
        return abs_determinant(t) != 0
    except RankDeficient:
        return False


# -- nearest plane -----------------------------------------------------------

class _Geometry:
    """Per-basis data for Babai rounding and randomized nearest plane."""

    def __init__(self, t: np.ndarray):
        self.t = t
        self.tf = t.astype(np.float64)
        self.steps = []
        unit: list[tuple[int, int]] = []  # (row, col) for a pending run of 1x1 blocks

        def flush():
            # split the run into batches whose columns do not touch each other's rows
            batch: list[tuple[int, int]] = []
            for r, c in unit:
                if batch and np.any(t[[br for br, _ in batch], c]):
                    self._push_unit(batch)
                    batch = []
                batch.append((r, c))
            if batch:
                self._push_unit(batch)
            unit.clear()

        for rows, lo, hi in block_structure(t):
            if hi - lo == 1:
                unit.append((int(rows[0]), lo))
                continue
            flush()
            q, r = np.linalg.qr(self.tf[np.ix_(rows, np.arange(lo, hi))])
            self.steps.append(("dense", rows, lo, hi, q, r))
        flush()

    def _push_unit(self, batch):
        rows = np.array([r for r, _ in batch], dtype=np.intp)
        lo, hi = batch[0][1], batch[-1][1] + 1
        diag = self.tf[rows, np.arange(lo, hi)]
        self.steps.append(("unit", rows, lo, hi, diag))

    def gs_lengths(self) -> np.ndarray:
        out = np.empty(self.t.shape[0])
        for step in self.steps:
            if step[0] == "unit":
                out[step[2]:step[3]] = np.abs(step[4])
            else:
                out[step[2]:step[3]] = np.abs(np.diag(step[5]))
        return out

    def nearest_plane(self, centers: np.ndarray, sigma: float | None = None,
                      rng: RandomSource | None = None,
                      tail_cut: float = DEFAULT_TAIL_CUT) -> np.ndarray:
        """Integer coefficients z so that ``t @ z`` is close to each center.

        With ``sigma=None`` this is deterministic Babai nearest plane over
        several centers (one per column). Otherwise it is the randomized
        variant for a single center: each coefficient is drawn from
        D_{Z, sigma/|b~_i|, c_i}, making ``t @ z`` a sample from the discrete
        Gaussian over the lattice centred at the given point.
        """
        c = np.array(centers, dtype=np.float64)
        if c.ndim == 1:
            c = c[:, None]
        if sigma is not None and c.shape[1] != 1:
            raise ValueError("randomized nearest plane takes a single center")
        z = np.zeros(c.shape, dtype=np.float64)
        for step in reversed(self.steps):
            kind, rows, lo, hi = step[:4]
            if kind == "unit":
                coeff = c[rows, :] / step[4][:, None]
                if sigma is None:
                    zb = np.floor(coeff + 0.5)
                else:
                    widths = sigma / np.abs(step[4])
                    zb = np.array([[sample_z_float(w, x, rng, tail_cut)]
                                   for w, x in zip(widths.tolist(), coeff[:, 0].tolist())],
                                  dtype=np.float64)
            else:
                qm, rm = step[4], step[5]
                y = qm.T @ c[rows, :]
                zb = np.zeros((hi - lo, c.shape[1]))
                for i in range(hi - lo - 1, -1, -1):
                    d = rm[i, i]
                    coeff = y[i] / d
                    if sigma is None:
                        zi = np.floor(coeff + 0.5)
                    else:
                        zi = np.array([sample_z_float(sigma / abs(d), float(coeff[0]), rng,
                                                      tail_cut)], dtype=np.float64)
                    y[:i + 1] -= np.outer(rm[:i + 1, i], zi)
                    zb[i] = zi
            c -= self.tf[:, lo:hi] @ zb
            z[lo:hi] = zb
        return np.rint(z).astype(np.int64)


def _int_matmul(t: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Exact integer product, falling back to Python ints when int64 could overflow."""
    bound = int(np.abs(t).max(initial=0)) * int(np.abs(z).max(initial=0)) * t.shape[1]
    if bound < 1 << 53:
        # every partial sum is an integer below 2^53, so BLAS float64 is exact
        return np.rint(t.astype(np.float64) @ z.astype(np.float64)).astype(np.int64)
    if bound < _INT64_SAFE:
        return t @ z
    return t.astype(object) @ z.astype(object)


# -- data types --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrapdoorPair:
    """A matrix A (n x m over Z_q) with a basis T of its kernel lattice.

    ``known_gs_sq`` lets constructors that already know the Gram-Schmidt
    norms (basis extension preserves them) skip the exact recomputation.
    """

    matrix_a: ZqMatrix
    basis_t: np.ndarray
    known_gs_sq: tuple[Fraction, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        t = np.array(self.basis_t, dtype=np.int64)
        t.setflags(write=False)
        object.__setattr__(self, "basis_t", t)
        if t.shape != (self.matrix_a.ncols, self.matrix_a.ncols):
            raise DimensionError(
                f"basis shape {t.shape} does not match A with {self.matrix_a.ncols} columns")

    @property
    def n(self) -> int:
        return self.matrix_a.nrows

    @property
    def m(self) -> int:
        return self.matrix_a.ncols

    @property
    def modulus(self) -> Modulus:
        return self.matrix_a.modulus

    @cached_property
    def geometry(self) -> _Geometry:
        return _Geometry(self.basis_t)

    @cached_property
    def gs_sq_norms(self) -> tuple[Fraction, ...]:
        if self.known_gs_sq is not None:
            return self.known_gs_sq
        return tuple(gram_schmidt_sq_norms(self.basis_t))

    @cached_property
    def gs_norm(self) -> float:
        return sqrt_upper(max(self.gs_sq_norms))

    @cached_property
    def column_norm_bound(self) -> float:
        """Cheap upper bound on the Gram-Schmidt norm (longest basis column)."""
        t = self.basis_t
        big = int(np.abs(t).max(initial=0))
        if big * big * t.shape[0] < _INT64_SAFE:
            sq = int((t * t).sum(axis=0).max())
        else:
            sq = int((t.astype(object) ** 2).sum(axis=0).max())
        return sqrt_upper(Fraction(sq))

    @cached_property
    def _coset_solver(self) -> tuple[list[int], list[list[int]]]:
        # pivot columns of A and the inverse of that n x n submatrix
        q = self.modulus.q
        pivots = row_reduce([list(r) for r in self.matrix_a.entries], q, self.m)
        if len(pivots) < self.n:
            raise NoSolution("columns of A do not generate Z_q^n")
        sub = ZqMatrix(tuple(tuple(r[c] for c in pivots) for r in self.matrix_a.entries),
                       self.n, self.n, self.modulus)
        return pivots, solve_columns(sub, ZqMatrix.identity(self.n, self.modulus))

    def coset_point(self, u: ZqVector) -> list[int]:
        """Some integer t with A t = u (mod q), supported on n pivot columns."""
        pivots, inv = self._coset_solver
        q = self.modulus.q
        t = [0] * self.m
        for c, row in zip(pivots, inv):
            t[c] = sum(a * b for a, b in zip(row, u.entries)) % q
        return t

    @cached_property
    def _extensions(self) -> dict:
        return {}

    def extension(self, a_bar: ZqMatrix) -> TrapdoorPair:
        """extend_pair(self, a_bar), memoized for the most recent few a_bar."""
        cache = self._extensions
        ext = cache.pop(a_bar, None)
        if ext is None:
            ext = extend_pair(self, a_bar)
            if len(cache) >= _EXTENSION_CACHE:
                del cache[next(iter(cache))]
        cache[a_bar] = ext
        return ext

    def kernel_residue(self) -> ZqMatrix:
        """A @ T mod q; the zero matrix for a valid pair."""
        prod = self.matrix_a.to_flint() * flint.fmpz_mat(self.basis_t.tolist())
        q = self.modulus.q
        rows = [[int(prod[i, j]) % q for j in range(prod.ncols())]
                for i in range(prod.nrows())]
        return ZqMatrix.from_rows(rows, self.modulus, ncols=self.m)

    def verify(self) -> bool:
        res = self.kernel_residue()
        return all(x == 0 for r in res.entries for x in r) and is_full_rank(self.basis_t)


@dataclass(frozen=True)
class Preimage:
    vector_e: tuple[int, ...]
    target_u: ZqVector
    norm_bound: float

    @property
    def norm(self) -> float:
        return math.sqrt(sum(x * x for x in self.vector_e))

    @property
    def dim(self) -> int:
        return len(self.vector_e)


# -- gadget trapdoor ---------------------------------------------------------

def _gadget_width(q: int) -> int:
    return max(1, (q - 1).bit_length())


def gadget_basis(q: int) -> list[list[int]]:
    """Short basis of the kernel of g = (1, 2, ..., 2^{k-1}) mod q.

    Columns 2e_j - e_{j+1} for j < k-1 and the binary digits of q as the last
    column; its Gram-Schmidt norm is at most sqrt(5).
    """
    k = _gadget_width(q)
    s = [[0] * k for _ in range(k)]
    for j in range(k - 1):
        s[j][j] = 2
        s[j + 1][j] = -1
    if q == 1 << k:
        s[k - 1][k - 1] = 2
    else:
        for i in range(k):
            s[i][k - 1] = (q >> i) & 1
    return s


def meets_trapgen_bound(n: int, m: int, q: int) -> bool:
    """m >= 5 n log2(q), decided exactly as 2^m >= q^(5n)."""
    # q^(5n) has between 5n(b-1)+1 and 5nb bits, so most inputs are decided
    # without forming the power
    b = q.bit_length()
    if m >= 5 * n * b:
        return True
    if m < 5 * n * (b - 1):
        return False
    return (1 << m) >= q ** (5 * n)


def _uniform(rows: int, cols: int, modulus: Modulus, rng: RandomSource) -> ZqMatrix:
    q = modulus.q
    return ZqMatrix(tuple(tuple(rng.randbelow(q) for _ in range(cols)) for _ in range(rows)),
                    rows, cols, modulus)


def trap_gen(n: int, m: int, modulus: Modulus, rng: RandomSource) -> TrapdoorPair:
    """Sample A (n x m) close to uniform together with a short basis of its kernel.

    Gadget construction on the first 2nk columns (k = ceil(log2 q)):
    ``A1 = [Ab | G - Ab R]`` with R uniform in {-1,0,1}, whose kernel has the
    basis ``[[I + R W, R S], [W, S]]`` where ``G W = -Ab`` bitwise and S is
    the gadget basis. The remaining columns are uniform and are attached with
    ext_basis, which leaves the Gram-Schmidt norm unchanged.
    """
    q = modulus.q
    if q >= _INT64_SAFE:
        raise TrapdoorError("modulus too large for int64 trapdoor bases")
    if not meets_trapgen_bound(n, m, q):
        raise TrapdoorError(f"need m >= 5 n log2 q (n={n}, m={m}, q={q})")
    k = _gadget_width(q)
    w = n * k
    mbar = n * k
    if m < mbar + w:
        raise TrapdoorError("m too small for the gadget construction")

    abar = _uniform(n, mbar, modulus, rng)
    r = np.array([[rng.randbelow(3) - 1 for _ in range(w)] for _ in range(mbar)],
                 dtype=np.int64)
    g = np.zeros((n, w), dtype=object)
    for i in range(n):
        for j in range(k):
            g[i, i * k + j] = 1 << j
    ab_r = abar.to_flint() * flint.fmpz_mat(r.tolist())
    right = [[(int(g[i, j]) - int(ab_r[i, j])) % q for j in range(w)] for i in range(n)]
    a1 = concat_cols(abar, ZqMatrix.from_rows(right, modulus, ncols=w))

    sk = np.array(gadget_basis(q), dtype=np.int64)
    s = np.kron(np.eye(n, dtype=np.int64), sk)
    bits = np.zeros((w, mbar), dtype=np.int64)
    for col in range(mbar):
        for i in range(n):
            v = (-abar.entries[i][col]) % q
            for j in range(k):
                bits[i * k + j, col] = (v >> j) & 1
    t1 = np.block([[np.eye(mbar, dtype=np.int64) + r @ bits, r @ s],
                   [bits, s]])
    core = TrapdoorPair(a1, t1)
    if m == mbar + w:
        return core
    return extend_pair(core, _uniform(n, m - mbar - w, modulus, rng))


# -- basis extension ---------------------------------------------------------

def _extension_block(geometry: _Geometry, a: ZqMatrix, a_bar: ZqMatrix) -> np.ndarray:
    """Short integer W with ``a @ W = -a_bar`` (mod q), reduced against the basis."""
    x = np.array(solve_columns(a, -a_bar), dtype=np.int64)
    z = geometry.nearest_plane(x.astype(np.float64))
    return x - _int_matmul(geometry.t, z)


def _assemble(s: np.ndarray, w: np.ndarray) -> np.ndarray:
    m, mb = s.shape[0], w.shape[1]
    return np.block([[s, w], [np.zeros((mb, m), dtype=np.int64), np.eye(mb, dtype=np.int64)]])


def _check_kernel_basis(s: np.ndarray, a: ZqMatrix):
    pair = TrapdoorPair(a, s)
    if any(x for r in pair.kernel_residue().entries for x in r):
        raise TrapdoorError("A @ S is not zero mod q")
    det = abs_determinant(s)
    if det != a.modulus.q ** a.nrows:
        raise TrapdoorError(f"|det S| = {det} does not match the kernel lattice index")


def ext_basis(s_basis, a: ZqMatrix, a_bar: ZqMatrix,
              perm: Sequence[int] | None = None, check: bool = True) -> np.ndarray:
    """Basis of the kernel lattice of ``(a || a_bar)`` from a basis S of a's kernel.

    Returns ``[[S, W], [0, I]]`` with ``a W = -a_bar`` (mod q); its Gram-Schmidt
    vectors are those of S followed by unit vectors, so the Gram-Schmidt norm
    is unchanged. If ``perm`` is given, the result is a basis for the matrix
    whose column j is column ``perm[j]`` of ``(a || a_bar)``, i.e. its rows
    are permuted the same way.
    """
    s = np.array(s_basis, dtype=np.int64)
    if a_bar.nrows != a.nrows:
        raise DimensionError("a and a_bar must have the same number of rows")
    if s.shape != (a.ncols, a.ncols):
        raise DimensionError("basis does not match a")
    if check:
        _check_kernel_basis(s, a)
    if a_bar.ncols == 0:
        out = s
    else:
        out = _assemble(s, _extension_block(_Geometry(s), a, a_bar))
    if perm is not None:
        perm = list(perm)
        if sorted(perm) != list(range(out.shape[0])):
            raise ValueError("perm must be a permutation of the columns")
        out = out[perm, :]
    return out


def extend_pair(pair: TrapdoorPair, a_bar: ZqMatrix) -> TrapdoorPair:
    """TrapdoorPair for ``(A || a_bar)`` built with ext_basis, reusing pair's geometry."""
    if a_bar.ncols == 0:
        return pair
    w = _extension_block(pair.geometry, pair.matrix_a, a_bar)
    known = None
    if pair.known_gs_sq is not None or "gs_sq_norms" in pair.__dict__:
        known = tuple(pair.gs_sq_norms) + (Fraction(1),) * a_bar.ncols
    return TrapdoorPair(concat_cols(pair.matrix_a, a_bar), _assemble(pair.basis_t, w), known)


# -- preimage sampling -------------------------------------------------------

def _required_sigma(gs: float, m: int, c_omega: float) -> float:
    return gs * c_omega * math.sqrt(math.log(m)) if m > 1 else 0.0


def check_sigma(pair: TrapdoorPair, sigma: float, c_omega: float = C_OMEGA):
    """Raise GaussianTooSmall unless sigma >= |T~| * c_omega * sqrt(ln m)."""
    if sigma >= _required_sigma(pair.column_norm_bound, pair.m, c_omega):
        return
    need = _required_sigma(pair.gs_norm, pair.m, c_omega)
    if sigma < need:
        raise GaussianTooSmall(f"sigma={sigma:.4g} below the required {need:.4g}")


def sample_pre(pair: TrapdoorPair, u: ZqVector, sigma: GaussParam, rng: RandomSource,
               c_omega: float = C_OMEGA) -> Preimage:
    """Sample e with ``A e = u`` (mod q) from (close to) the discrete Gaussian
    over that coset with parameter sigma."""
    if u.dim != pair.n:
        raise DimensionError(f"target has dim {u.dim}, expected {pair.n}")
    if u.modulus.q != pair.modulus.q:
        raise ValueError("modulus mismatch")
    s = float(sigma.sigma)
    check_sigma(pair, s, c_omega)

    t = np.array(pair.coset_point(u), dtype=np.int64)
    # e = t - v with v ~ D_{lattice, sigma, t}
    z = pair.geometry.nearest_plane(t.astype(np.float64), s, rng, sigma.tail_cut)[:, 0]
    v = _int_matmul(pair.basis_t, z)
    e = tuple(int(a) - int(b) for a, b in zip(t.tolist(), v.tolist()))

    if mat_vec(pair.matrix_a, e) != u:
        raise AssertionError("preimage does not satisfy A e = u")
    bound = sigma.tail_cut * s * math.sqrt(pair.m)
    pre = Preimage(e, u, bound)
    if pre.norm > bound:
        raise AssertionError("preimage exceeds its tail-cut norm bound")
    return pre


def sample_left(a0: ZqMatrix, b1: ZqMatrix, t_a0: TrapdoorPair, sigma: GaussParam,
                u: ZqVector, rng: RandomSource, c_omega: float = C_OMEGA) -> Preimage:
    """Preimage of u under ``(a0 || b1)`` using only a trapdoor for a0.

    Extends the trapdoor to ``(a0 || b1)`` and runs sample_pre there, so the
    sigma requirement is |T~_a0| * c_omega * sqrt(ln(m + m1)).
    """
    if a0 is not t_a0.matrix_a and a0 != t_a0.matrix_a:
        raise TrapdoorError("trapdoor does not belong to a0")
    if b1.nrows != a0.nrows:
        raise DimensionError("a0 and b1 must have the same number of rows")
    return sample_pre(t_a0.extension(b1), u, sigma, rng, c_omega)
