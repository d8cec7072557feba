"""Gamma, digamma and Hurwitz zeta on the real line."""
from __future__ import annotations

import math
from fractions import Fraction

# B_2, B_4, ..., B_24
_BERNOULLI_EVEN = [
    Fraction(1, 6), Fraction(-1, 30), Fraction(1, 42), Fraction(-1, 30), Fraction(5, 66),
    Fraction(-691, 2730), Fraction(7, 6), Fraction(-3617, 510), Fraction(43867, 798),
    Fraction(-174611, 330), Fraction(854513, 138), Fraction(-236364091, 2730),
]
# B_2j / (2j)!
_EM_COEF = [float(b / math.factorial(2 * (j + 1))) for j, b in enumerate(_BERNOULLI_EVEN)]
# B_2k / (2k) for the digamma asymptotic series
_PSI_COEF = [float(b / (2 * (k + 1))) for k, b in enumerate(_BERNOULLI_EVEN[:8])]

EULER_GAMMA = 0.57721566490153286060651209008240243


def _is_nonpositive_integer(x: float) -> bool:
    return x <= 0 and float(x).is_integer()


def gamma_fn(x: float) -> float:
    if _is_nonpositive_integer(x):
        raise ValueError(f"Gamma has a pole at {x}")
    return math.gamma(x)


def rgamma(x: float) -> float:
    """``1 / Gamma(x)``, zero at the poles."""
    if _is_nonpositive_integer(x):
        return 0.0
    return 1.0 / math.gamma(x)


def digamma(x: float) -> float:
    if _is_nonpositive_integer(x):
        raise ValueError(f"digamma has a pole at {x}")
    if x < 0:
        return digamma(1.0 - x) - math.pi / math.tan(math.pi * x)
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    p = inv2
    for c in _PSI_COEF:
        series += c * p
        p *= inv2
    return acc + math.log(x) - 0.5 / x - series


def hurwitz_zeta(s: float, a: float, terms: int = 16) -> float:
    """``sum_{p >= 0} (p + a)^{-s}`` for ``s > 1`` and ``a > 0``.

    A direct head sum of ``terms`` terms followed by the Euler-Maclaurin tail
    with twelve Bernoulli corrections.
    """
    if not s > 1:
        raise ValueError(f"Hurwitz zeta diverges for s <= 1, got s={s}")
    if not a > 0:
        raise ValueError(f"Hurwitz zeta needs a > 0, got a={a}")
    head = math.fsum((k + a) ** -s for k in range(terms))
    x = terms + a
    tail = x ** (1.0 - s) / (s - 1.0) + 0.5 * x ** -s
    rising = s  # s (s+1) ... (s+2j-2)
    xpow = x ** (-s - 1.0)
    corr = []
    for j, c in enumerate(_EM_COEF):
        corr.append(c * rising * xpow)
        rising *= (s + 2 * j + 1) * (s + 2 * j + 2)
        xpow /= x * x
    return head + tail + math.fsum(corr)
