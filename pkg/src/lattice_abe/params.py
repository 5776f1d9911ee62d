"""System parameter selection and the correctness noise budget.

Every asymptotic omega(f) is instantiated as ``c_omega * f`` with
``c_omega = 2`` and natural logarithms; the trapdoor dimension bound
``m >= 5 n log2 q`` uses base 2. All derived quantities are exact rationals
rounded in the safe direction, so the checks below are rigorous statements
about the stored numbers rather than float approximations.

Let ``K = (c_omega sqrt(ln 2m) + 1) (1 + L^2 sigma sqrt(2m))``. Then

* ``sigma = max(L m c_omega ln(L m), m c_omega ln(2m))``
* ``alpha = 1 / (5 K)``, rounded down onto a 2^-p grid
* ``q`` = the least prime >= ``max(10 sqrt(2m) K, 2 sqrt(n) / alpha)``
* ``m = max(ceil(n^1.5), least m with 2^m >= q^(5n))``, iterated to a fixpoint

and decryption stays correct as long as ``q alpha K <= q / 5``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .sampling import ErrorParam, GaussParam
from .trapdoor import meets_trapgen_bound
from .zq import Modulus, next_prime

C_OMEGA = 2
TOY_MAX_N = 8
TOY_ALPHA_BITS = 40
PROFILES = ("toy", "paper")
_LOG_SLACK = Fraction(1, 1 << 40)


class ParameterError(ValueError):
    """No parameter set satisfies the constraints for the requested inputs."""


def ln_upper(x) -> Fraction:
    """Rational upper bound on ln(x) for x >= 1 (float log is off by < 1 ulp)."""
    v = math.log(x)
    return Fraction(v) * (1 + _LOG_SLACK) + _LOG_SLACK


def sqrt_upper(x) -> Fraction:
    """Rational upper bound on sqrt(x), exact to 2^-32."""
    x = Fraction(x)
    scaled = math.ceil(x * (1 << 64))
    r = math.isqrt(scaled)
    if r * r < scaled:
        r += 1
    return Fraction(r, 1 << 32)


def ceil_pow15(n: int) -> int:
    """ceil(n^1.5) exactly."""
    c = n ** 3
    r = math.isqrt(c)
    return r if r * r == c else r + 1


def min_trapgen_m(n: int, q: int) -> int:
    """Least m with 2^m >= q^(5n), i.e. m >= 5 n log2 q."""
    return (q ** (5 * n) - 1).bit_length()


def budget_factor(m: int, cap_l: int, sigma: Fraction, c_omega=C_OMEGA) -> Fraction:
    """Upper bound on K = (c sqrt(ln 2m) + 1)(1 + L^2 sigma sqrt(2m))."""
    c = Fraction(c_omega)
    return (c * sqrt_upper(ln_upper(2 * m)) + 1) * (1 + cap_l ** 2 * sigma * sqrt_upper(2 * m))


def sigma_for(m: int, cap_l: int, c_omega=C_OMEGA) -> Fraction:
    c = Fraction(c_omega)
    lm = cap_l * m
    return max(lm * c * ln_upper(lm), m * c * ln_upper(2 * m))


@dataclass(frozen=True)
class SystemParams:
    lambda_: int
    n: int
    m: int
    q: Modulus
    sigma: GaussParam
    alpha: ErrorParam
    cap_l: int
    c_omega: int = C_OMEGA
    profile: str = "toy"

    @property
    def delta(self) -> float:
        """Smallest delta with n^(1+delta) = n log2 q."""
        return math.log(math.log2(self.q.q)) / math.log(self.n)

    def summary(self) -> dict[str, object]:
        return {
            "profile": self.profile,
            "lambda": self.lambda_,
            "n": self.n,
            "m": self.m,
            "L": self.cap_l,
            "q bits": self.q.q.bit_length(),
            "q": self.q.q,
            "sigma": f"{float(self.sigma.sigma):.6g}",
            "alpha": f"{float(self.alpha.alpha):.6g}",
            "delta": f"{self.delta:.4f}",
            "c_omega": self.c_omega,
        }


def _validate_inputs(n: int, cap_l: int, profile: str):
    if profile not in PROFILES:
        raise ParameterError(f"unknown profile {profile!r}")
    if n < 2:
        raise ParameterError("n must be at least 2")
    if cap_l < 1:
        raise ParameterError("L must be at least 1")
    if cap_l > n:
        raise ParameterError(f"L={cap_l} exceeds n={n}: share targets are unit vectors in Z_q^n")
    if profile == "toy" and n > TOY_MAX_N:
        raise ParameterError(f"toy profile supports n <= {TOY_MAX_N}")


def select_params(n: int, cap_l: int, profile: str = "toy", c_omega: int = C_OMEGA) -> SystemParams:
    _validate_inputs(n, cap_l, profile)
    m = ceil_pow15(n)
    for _ in range(100):
        sigma = GaussParam(sigma_for(m, cap_l, c_omega)).sigma
        k_up = budget_factor(m, cap_l, sigma, c_omega)
        if profile == "toy":
            bits = TOY_ALPHA_BITS
        else:
            bits = math.ceil(5 * k_up).bit_length() + 32
        scale = 1 << bits
        alpha = Fraction(math.floor(scale / (5 * k_up)), scale)
        if alpha == 0:
            raise ParameterError("alpha underflows its fixed-point grid")
        q_min = max(10 * sqrt_upper(2 * m) * k_up, 2 * sqrt_upper(n) / alpha)
        q = next_prime(math.ceil(q_min))
        m_next = max(m, min_trapgen_m(n, q))
        if m_next == m:
            break
        m = m_next
    else:
        raise ParameterError("parameter fixpoint did not converge")
    params = SystemParams(
        lambda_=q.bit_length(), n=n, m=m, q=Modulus(q), sigma=GaussParam(sigma),
        alpha=ErrorParam(alpha, Modulus(q)), cap_l=cap_l, c_omega=c_omega, profile=profile,
    )
    failed = [k for k, ok in check_restrictions(params).items() if not ok]
    if failed:
        raise ParameterError(f"constraints unsatisfied: {', '.join(failed)}")
    return params


def noise_budget_check(params: SystemParams) -> bool:
    """q alpha K <= q / 5, with K rounded up."""
    k_up = budget_factor(params.m, params.cap_l, params.sigma.sigma, params.c_omega)
    q = params.q.q
    return q * params.alpha.alpha * k_up <= Fraction(q, 5)


def check_restrictions(params: SystemParams) -> dict[str, bool]:
    """Each named constraint of the parameter system, evaluated exactly."""
    n, m, q, cap_l = params.n, params.m, params.q.q, params.cap_l
    c = Fraction(params.c_omega)
    sigma = params.sigma.sigma
    aq = params.alpha.alpha * q
    return {
        "cap_l <= n": 1 <= cap_l <= n,
        "m >= 5 n log2 q": meets_trapgen_bound(n, m, q),
        "sigma >= m c ln(2m)": sigma >= m * c * ln_upper(2 * m),
        "alpha q >= 2 sqrt(m)": aq > 0 and aq * aq >= 4 * m,
        "sigma >= L m c ln(L m)": sigma >= cap_l * m * c * ln_upper(cap_l * m),
        "noise budget": noise_budget_check(params),
    }
