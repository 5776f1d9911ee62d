"""Randomness sources and Gaussian samplers.

``sample_z`` draws from the discrete Gaussian D_{Z,sigma,c}, with weights
proportional to ``exp(-pi (y - c)^2 / sigma^2)``, truncated at
``tail_cut * sigma``. ``sample_error`` draws from the rounded LWE error
distribution: a real Gaussian of parameter alpha (standard deviation
``alpha / sqrt(2 pi)``), scaled by q and rounded to the nearest integer mod q.

Floating point is used inside the samplers only; everything they return is an
exact integer.
"""

from __future__ import annotations

import hashlib
import math
import random
import secrets
from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from itertools import accumulate

from .zq import Modulus, ZqVector

MAX_REJECTIONS = 10**6
DEFAULT_TAIL_CUT = 12
# below this sigma the Laplace envelope gets loose; invert a table instead
_TABLE_SIGMA = 2.5


class SamplerError(RuntimeError):
    """A sampler gave up; almost always a misconfigured parameter."""


class RandomSource:
    """Either OS entropy or a deterministic stream keyed by a 32-byte seed.

    Seeded sources replay identically, which is what the tests and the
    ``--seed`` CLI flag rely on. The seeded stream is Mersenne Twister and is
    not suitable for real keys.
    """

    def __init__(self, seed: bytes | None = None):
        if seed is None:
            self.seed = None
            self._rng: random.Random = random.SystemRandom()
        else:
            if len(seed) != 32:
                raise ValueError("seed must be exactly 32 bytes")
            self.seed = bytes(seed)
            self._rng = random.Random(int.from_bytes(self.seed, "big"))

    @classmethod
    def from_hex(cls, text: str | None) -> RandomSource:
        if text is None:
            return cls()
        text = text.strip()
        if len(text) != 64:
            raise ValueError("seed must be 64 hex characters")
        return cls(bytes.fromhex(text))

    @property
    def seeded(self) -> bool:
        return self.seed is not None

    def fork(self, label: bytes | str | int) -> RandomSource:
        """Independent child stream; deterministic in seeded mode."""
        if self.seed is None:
            return RandomSource()
        if isinstance(label, int):
            label = label.to_bytes(8, "little")
        elif isinstance(label, str):
            label = label.encode()
        return RandomSource(hashlib.sha256(b"fork" + self.seed + label).digest())

    def randbelow(self, n: int) -> int:
        return self._rng.randrange(n)

    def random(self) -> float:
        return self._rng.random()

    def expovariate(self) -> float:
        return self._rng.expovariate(1.0)

    def gauss(self, sigma: float) -> float:
        return self._rng.gauss(0.0, sigma)

    def randbytes(self, n: int) -> bytes:
        if self.seed is None:
            return secrets.token_bytes(n)
        return self._rng.randbytes(n)

    def choice(self, seq):
        return self._rng.choice(seq)


@dataclass(frozen=True)
class GaussParam:
    sigma: Fraction
    center: float = 0.0
    tail_cut: float = DEFAULT_TAIL_CUT

    def __post_init__(self):
        object.__setattr__(self, "sigma", to_fixed(self.sigma))
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.tail_cut < 6:
            raise ValueError("tail_cut must be at least 6")


def to_fixed(x, bits: int = 32) -> Fraction:
    """Round x up onto the 2^-bits grid (exact for Fractions and ints)."""
    x = Fraction(x)
    scale = 1 << bits
    return Fraction(math.ceil(x * scale), scale)


@dataclass(frozen=True)
class ErrorParam:
    alpha: Fraction
    modulus: Modulus

    def __post_init__(self):
        object.__setattr__(self, "alpha", Fraction(self.alpha))
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    @property
    def std(self) -> float:
        """Standard deviation of the centered integer error, before rounding."""
        return float(self.alpha) * self.modulus.q / math.sqrt(2 * math.pi)


def _table_sample(sigma: float, c: float, tail: float, rng: RandomSource) -> int:
    lo = math.ceil(c - tail * sigma)
    hi = math.floor(c + tail * sigma)
    k = math.pi / (sigma * sigma)
    weights = [math.exp(-k * (y - c) ** 2) for y in range(lo, hi + 1)]
    cdf = list(accumulate(weights))
    return lo + bisect_left(cdf, rng.random() * cdf[-1])


def sample_z_float(sigma: float, c: float, rng: RandomSource,
                   tail_cut: float = DEFAULT_TAIL_CUT) -> int:
    """Discrete Gaussian over Z with float parameters (hot-loop entry point).

    Rejection from a two-sided geometric (discrete Laplace) proposal centred
    on round(c) with scale equal to the Gaussian's standard deviation s. The
    envelope constant is exp(1/2 + delta/s) with delta = |c - round(c)|.
    """
    if sigma < _TABLE_SIGMA:
        return _table_sample(sigma, c, tail_cut, rng)
    s = sigma / math.sqrt(2 * math.pi)
    c0 = math.floor(c + 0.5)
    delta = abs(c - c0)
    log_m = 0.5 + delta / s
    inv2s2 = 1.0 / (2 * s * s)
    tail = tail_cut * sigma
    for _ in range(MAX_REJECTIONS):
        k = math.floor(s * rng.expovariate()) - math.floor(s * rng.expovariate())
        y = c0 + k
        d = y - c
        if abs(d) > tail:
            continue
        if rng.random() < math.exp(-d * d * inv2s2 + abs(k) / s - log_m):
            return y
    raise SamplerError(f"sample_z rejected {MAX_REJECTIONS} times (sigma={sigma}, c={c})")


def sample_z(p: GaussParam, rng: RandomSource) -> int:
    return sample_z_float(float(p.sigma), float(p.center), rng, p.tail_cut)


def _round_scaled(x: float, q: int) -> int:
    # round(q * (x mod 1)) mod q == round(q * x) mod q; skipping the mod-1 step
    # keeps precision when x is slightly negative
    if q.bit_length() <= 52:
        return math.floor(q * x + 0.5)
    return math.floor(Fraction(x) * q + Fraction(1, 2))


def sample_error(p: ErrorParam, rng: RandomSource) -> int:
    """One draw of the rounded error, as an element of [0, q)."""
    q = p.modulus.q
    x = rng.gauss(float(p.alpha) / math.sqrt(2 * math.pi))
    return _round_scaled(x, q) % q


def sample_error_vec(p: ErrorParam, dim: int, rng: RandomSource) -> ZqVector:
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return ZqVector(tuple(sample_error(p, rng) for _ in range(dim)), p.modulus)
