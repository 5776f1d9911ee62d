"""Independent reference computations used by several test modules.

These deliberately avoid the package's own numeric helpers: logarithms and
square roots come from ``decimal`` at high precision, and primality from a
Miller-Rabin test written out here.
"""

import decimal
from decimal import Decimal
from fractions import Fraction

CTX = decimal.Context(prec=80)


def dec(x) -> Decimal:
    x = Fraction(x)
    return CTX.divide(Decimal(x.numerator), Decimal(x.denominator))


def ln(x) -> Decimal:
    return CTX.ln(dec(x))


def sqrt(x) -> Decimal:
    return CTX.sqrt(dec(x))


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
    for p in small:
        if q % p == 0:
            return q == p
    d, s = q - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in small:
        x = pow(a, d, q)
        if x in (1, q - 1):
            continue
        for _ in range(s - 1):
            x = x * x % q
            if x == q - 1:
                break
        else:
            return False
    return True


def restriction_slack(n: int, m: int, q: int, cap_l: int, sigma, alpha,
                      c: int = 2) -> dict[str, Decimal]:
    """Relative slack (lhs - rhs) / rhs of each parameter constraint, in 80-digit decimal.

    A constraint holds when its slack is >= 0. Slacks far above 1e-70 are
    immune to the rounding of the decimal arithmetic.
    """
    with decimal.localcontext(CTX):
        sigma, alpha = dec(sigma), dec(alpha)
        k = (c * ln(2 * m).sqrt() + 1) * (1 + cap_l * cap_l * sigma * sqrt(2 * m))
        pairs = {
            "L <= n": (Decimal(n), Decimal(cap_l)),
            "m >= 5 n log2 q": (Decimal(m), 5 * n * ln(q) / ln(2)),
            "sigma >= m c ln 2m": (sigma, m * c * ln(2 * m)),
            "alpha q >= 2 sqrt m": (alpha * q, 2 * sqrt(m)),
            "sigma >= L m c ln Lm": (sigma, cap_l * m * c * ln(cap_l * m)),
            "q alpha K <= q/5": (Decimal(q) / 5, q * alpha * k),
        }
        return {name: (lhs - rhs) / rhs for name, (lhs, rhs) in pairs.items()}


def restrictions(n: int, m: int, q: int, cap_l: int, sigma, alpha, c: int = 2) -> dict[str, bool]:
    slack = restriction_slack(n, m, q, cap_l, sigma, alpha, c)
    return {name: v >= 0 for name, v in slack.items()}
