import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from conftest import seeded
from lattice_abe.sampling import (
    ErrorParam, GaussParam, RandomSource, sample_error, sample_error_vec, sample_z,
    sample_z_float, to_fixed,
)
from lattice_abe.zq import Modulus, centered

# 2^20 is not prime; the nearest prime above it stands in for it
Q20 = Modulus(1048583)


def exact_pmf(sigma, c, lo, hi):
    """Normalized rho_{sigma,c} over [lo, hi] by direct summation."""
    w = {y: math.exp(-math.pi * (y - c) ** 2 / sigma ** 2) for y in range(lo, hi + 1)}
    total = sum(w.values())
    return {y: v / total for y, v in w.items()}


def tv_distance(samples, pmf):
    counts = Counter(samples)
    n = len(samples)
    support = set(pmf) | set(counts)
    return 0.5 * sum(abs(counts.get(y, 0) / n - pmf.get(y, 0.0)) for y in support)


@pytest.fixture(scope="module")
def sigma4_draws():
    rng = seeded("sigma4")
    p = GaussParam(Fraction(4))
    return [sample_z(p, rng) for _ in range(100_000)]


# -- RandomSource ------------------------------------------------------------

def test_seeded_replay_and_fork():
    a, b = seeded("replay"), seeded("replay")
    assert [a.randbelow(1000) for _ in range(50)] == [b.randbelow(1000) for _ in range(50)]
    assert a.randbytes(16) == b.randbytes(16)
    f1, f2 = seeded("x").fork(3), seeded("x").fork(3)
    assert f1.randbytes(32) == f2.randbytes(32)
    assert seeded("x").fork(3).randbytes(32) != seeded("x").fork(4).randbytes(32)


def test_seed_validation():
    with pytest.raises(ValueError):
        RandomSource(b"short")
    with pytest.raises(ValueError):
        RandomSource.from_hex("abcd")
    assert RandomSource.from_hex("00" * 32).seeded
    assert not RandomSource.from_hex(None).seeded


def test_os_entropy_source_works():
    rng = RandomSource()
    assert 0 <= rng.randbelow(10) < 10
    assert len(rng.randbytes(8)) == 8


# -- parameters --------------------------------------------------------------

def test_gauss_param_invariants():
    with pytest.raises(ValueError):
        GaussParam(Fraction(0))
    with pytest.raises(ValueError):
        GaussParam(Fraction(3), tail_cut=5)
    p = GaussParam(Fraction(1, 3))
    assert p.sigma >= Fraction(1, 3)
    assert p.sigma - Fraction(1, 3) < Fraction(1, 1 << 32)
    assert p.sigma.denominator <= 1 << 32


@given(st.fractions(min_value=Fraction(1, 1000), max_value=10**6))
def test_to_fixed_rounds_up_onto_grid(x):
    y = to_fixed(x)
    assert y >= x and y - x < Fraction(1, 1 << 32)
    assert (y * (1 << 32)).denominator == 1


def test_error_param_invariants():
    with pytest.raises(ValueError):
        ErrorParam(Fraction(0), Q20)
    with pytest.raises(ValueError):
        ErrorParam(Fraction(1), Q20)


# -- sample_z ----------------------------------------------------------------

def test_sample_z_matches_exact_pmf(sigma4_draws):
    pmf = exact_pmf(4.0, 0.0, -60, 60)
    assert tv_distance(sigma4_draws, pmf) < 0.01


def test_sample_z_mean_near_zero(sigma4_draws):
    assert -0.1 < float(np.mean(sigma4_draws)) < 0.1


def test_sample_z_tail_mass_within_lemma_shape(sigma4_draws):
    frac = sum(1 for y in sigma4_draws if abs(y) > 4) / len(sigma4_draws)
    assert frac <= 0.60


def test_sample_z_sign_balance(sigma4_draws):
    pos = sum(1 for y in sigma4_draws if y > 0)
    neg = sum(1 for y in sigma4_draws if y < 0)
    assert abs(pos - neg) / len(sigma4_draws) < 0.01


@pytest.mark.parametrize("sigma,center", [(1.2, 0.3), (2.0, -0.5), (10.0, 0.37), (37.5, 5.9)])
def test_sample_z_off_center_and_table_path(sigma, center):
    rng = seeded(f"z-{sigma}-{center}")
    draws = [sample_z_float(sigma, center, rng) for _ in range(40_000)]
    span = int(8 * sigma) + 2
    pmf = exact_pmf(sigma, center, math.floor(center) - span, math.ceil(center) + span)
    # expected empirical TV shrinks with the support size; this bound is loose
    assert tv_distance(draws, pmf) < 0.02 + 0.004 * math.sqrt(sigma)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.8, 200), st.floats(-1e6, 1e6), st.integers(0, 2**32))
def test_sample_z_respects_tail_cut(sigma, center, seed):
    rng = RandomSource(seed.to_bytes(32, "big"))
    for _ in range(20):
        y = sample_z_float(sigma, center, rng, tail_cut=6)
        assert abs(y - center) <= 6 * sigma


def test_sample_z_replay():
    p = GaussParam(Fraction(7, 2), center=1.25)
    a, b = seeded("zr"), seeded("zr")
    assert [sample_z(p, a) for _ in range(200)] == [sample_z(p, b) for _ in range(200)]


# -- error distribution ------------------------------------------------------

def test_vanishing_alpha_gives_zero_error():
    p = ErrorParam(Fraction(1, 1 << 30), Q20)
    rng = seeded("tiny-alpha")
    zeros = sum(1 for _ in range(10_000) if centered(sample_error(p, rng), Q20.q) == 0)
    assert zeros / 10_000 >= 0.999


def test_error_magnitude_bound(toy_params):
    p = toy_params.alpha
    q, m = toy_params.q.q, toy_params.m
    bound = q * float(p.alpha) * 2 * math.sqrt(math.log(m)) + 0.5
    rng = seeded("lemma-bound")
    hits = sum(1 for _ in range(10_000) if abs(centered(sample_error(p, rng), q)) <= bound)
    assert hits / 10_000 >= 0.99


def test_error_standard_deviation():
    p = ErrorParam(Fraction(1, 1 << 10), Q20)
    rng = seeded("error-std")
    vals = np.array([centered(sample_error(p, rng), Q20.q) for _ in range(100_000)], dtype=float)
    want = Q20.q * float(p.alpha) / math.sqrt(2 * math.pi)
    assert abs(vals.std() - want) / want < 0.15
    assert abs(p.std - want) < 1e-9


def test_error_vec_dim1_matches_scalar_distribution():
    p = ErrorParam(Fraction(1, 1 << 14), Q20)
    a, b = seeded("vec-a"), seeded("vec-b")
    xs = [centered(sample_error_vec(p, 1, a)[0], Q20.q) for _ in range(20_000)]
    ys = [centered(sample_error(p, b), Q20.q) for _ in range(20_000)]
    edges = [-math.inf, -40, -20, -10, -5, 0, 5, 10, 20, 40, math.inf]
    table = np.array([np.histogram(xs, edges)[0], np.histogram(ys, edges)[0]])
    table = table[:, table.sum(axis=0) > 0]
    assert stats.chi2_contingency(table)[1] > 0.001


def test_error_vec_replay_and_dim_check():
    p = ErrorParam(Fraction(1, 1 << 12), Q20)
    assert sample_error_vec(p, 16, seeded("ev")) == sample_error_vec(p, 16, seeded("ev"))
    with pytest.raises(ValueError):
        sample_error_vec(p, 0, seeded("ev"))


def test_error_vec_norm_concentration(toy_params):
    p = toy_params.alpha
    q, m = toy_params.q.q, toy_params.m
    bound = q * float(p.alpha) * math.sqrt(m) * toy_params.c_omega
    rng = seeded("vec-norm")
    trials = 200
    ok = 0
    for _ in range(trials):
        v = sample_error_vec(p, m, rng)
        ok += math.sqrt(sum(x * x for x in v.centered())) <= bound
    assert ok / trials >= 0.99


def test_large_modulus_rounding_path():
    q = Modulus((1 << 61) - 1)
    p = ErrorParam(Fraction(1, 1 << 50), q)
    rng = seeded("big-q")
    vals = [centered(sample_error(p, rng), q.q) for _ in range(2000)]
    want = q.q * float(p.alpha) / math.sqrt(2 * math.pi)
    assert abs(np.std(vals) - want) / want < 0.15
