"""Analytic predictions for the multifractal dimensions.

Strong multifractality (small ``g``)::

    D_q = (2q - 1)/(q - 1) + 4|g| rho s sqrt(pi) Gamma(1/2 - q) / ((q - 1) Gamma(-q))   q < 1/2
    D_q = 4|g| rho s sqrt(pi) Gamma(q - 1/2) / Gamma(q)                                q > 1/2

Weak multifractality: ``D_q = 1 - t q``. The solvable RS column vectors have
``D_q = (2q - 1)/(q - 1)`` below ``q = 1/2`` and ``0`` above.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate

from .ensembles import EnsembleSpec, Kind, element_abs_sum
from .special import digamma, gamma_fn, hurwitz_zeta, rgamma

SQRT_PI = math.sqrt(math.pi)


class TheoryDomainError(ValueError):
    """A formula was evaluated outside the range where it is defined."""


def gaussian_density(e: float) -> float:
    return math.exp(-0.5 * e * e) / math.sqrt(2.0 * math.pi)


def _require_below_half(q: float, what: str) -> None:
    if not q < 0.5:
        raise TheoryDomainError(f"{what} diverges for q >= 1/2 (got q={q})")


def a_q_gaussian(q: float, e: float = 0.0) -> float:
    """``A_q = int dp sigma(p) / |E - p|^{2q}`` for a standard normal ``sigma``.

    The singular factor ``u^{-2q}`` (``u = |p - E|``) is handled by QUADPACK's
    algebraic weight; the remaining integrand is smooth.
    """
    _require_below_half(q, "A_q")

    def folded(u):
        return gaussian_density(e + u) + gaussian_density(e - u)

    cut = 12.0 + abs(e)
    head, _ = integrate.quad(folded, 0.0, cut, weight="alg", wvar=(-2.0 * q, 0.0),
                             epsabs=1e-14, epsrel=1e-12, limit=200)
    tail, _ = integrate.quad(lambda u: folded(u) * u ** (-2.0 * q), cut, np.inf,
                             epsabs=1e-16, epsrel=1e-12, limit=200)
    return head + tail


def a_q_gaussian_closed(q: float) -> float:
    """Closed form of ``A_q`` at ``E = 0``: ``2^{-q} Gamma(1/2 - q) / sqrt(pi)``."""
    _require_below_half(q, "A_q")
    return 2.0 ** (-q) * gamma_fn(0.5 - q) / SQRT_PI


class BqValues(NamedTuple):
    quadrature: float
    closed_form: float


def b_q(q: float) -> BqValues:
    """``int_{-inf}^{inf} [(1 + 1/t^2)^q - 1] dt`` by quadrature, together with
    the closed form ``-sqrt(pi) Gamma(1/2 - q) / Gamma(-q)``.

    The two differ by a factor of two: the full-line integral equals
    ``-2 sqrt(pi) Gamma(1/2 - q) / Gamma(-q)``. Both are returned so callers
    can see which normalization they are using.
    """
    _require_below_half(q, "B_q")
    # [0, 1]: (1 + t^2)^q t^{-2q} - 1, singular factor through the algebraic weight
    part1, _ = integrate.quad(lambda t: (1.0 + t * t) ** q, 0.0, 1.0, weight="alg",
                              wvar=(-2.0 * q, 0.0), epsabs=1e-14, epsrel=1e-12)
    part1 -= 1.0

    # [1, inf) mapped to u = 1/t in (0, 1]; the integrand tends to q at u = 0
    def mapped(u):
        if u < 1e-4:
            return q + 0.5 * q * (q - 1.0) * u * u
        return ((1.0 + u * u) ** q - 1.0) / (u * u)

    part2, _ = integrate.quad(mapped, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12)
    closed = -SQRT_PI * gamma_fn(0.5 - q) * rgamma(-q)
    return BqValues(quadrature=2.0 * (part1 + part2), closed_form=closed)


def dq_strong(q: float, g: float, s: float, rho_e: Optional[float] = None, e: float = 0.0) -> float:
    """First-order strong-multifractality ``D_q`` (``g = 0`` gives the zero-order value).

    ``rho_e`` defaults to the unperturbed density ``sigma(E)`` of the diagonal.
    """
    if q == 0.5:
        raise TheoryDomainError("strong-coupling D_q is singular at q = 1/2")
    rho = gaussian_density(e) if rho_e is None else rho_e
    amp = 4.0 * abs(g) * rho * s * SQRT_PI
    if q < 0.5:
        return (2.0 * q - 1.0) / (q - 1.0) + amp * gamma_fn(0.5 - q) * rgamma(-q) / (q - 1.0)
    return amp * gamma_fn(q - 0.5) * rgamma(q)


def weak_t(kind, g: float, beta: Optional[int] = None) -> float:
    """Slope ``t`` of ``D_q = 1 - t q`` in the weak-multifractality limit."""
    kind = Kind(kind)
    if kind is Kind.CRBRME:
        if beta not in (1, 2):
            raise ValueError(f"CrBRME needs beta in {{1, 2}}, got {beta!r}")
        return 1.0 / (2.0 * math.pi * beta * g)
    if kind.is_cm:
        return 0.0
    if kind is Kind.RS:
        k = round(g)  # half-integers go to the even neighbour
        if abs(g - math.floor(g) - 0.5) < 1e-15:
            warnings.warn(f"g={g} is equidistant from two integers; using k={k}", stacklevel=2)
        if k == 0:
            raise TheoryDomainError(f"RS weak regime needs g near a nonzero integer, got g={g}")
        return (g - k) ** 2 / k ** 2
    raise TheoryDomainError(f"no weak-multifractality expansion for {kind.value}")


def dq_weak(q: float, kind, g: float, beta: Optional[int] = None) -> float:
    return 1.0 - weak_t(kind, g, beta) * q


def s_constant(kind, beta: Optional[int] = None, mu: Optional[float] = None) -> float:
    """Coefficient ``s`` of ``2 s ln N`` in ``(1/N) sum_{m != n} |M_mn|`` per unit ``|g|``.

    For ``CM_t`` this is the integer part of ``mu / pi``, which vanishes for
    ``mu < pi``; :func:`empirical_s` measures the coefficient directly.
    """
    kind = Kind(kind)
    if kind in (Kind.RS, Kind.CM_R, Kind.CM_H):
        return 1.0
    if kind is Kind.CRBRME:
        if beta == 1:
            return 1.0 / SQRT_PI
        if beta == 2:
            return math.sqrt(math.pi / 8.0)
        raise ValueError(f"CrBRME needs beta in {{1, 2}}, got {beta!r}")
    if kind is Kind.CM_T:
        if mu is None:
            raise ValueError("CM_t needs mu")
        if isinstance(mu, str):
            # mu = 2 pi / N < pi for every N >= 3
            return 0.0
        return float(math.floor(mu / math.pi))
    raise TheoryDomainError(f"no perturbative s for {kind.value}")


def empirical_s(template: EnsembleSpec, sizes: Sequence[int]) -> float:
    """Slope of ``element_abs_sum / (2|g|)`` against ``ln N``."""
    scale = 2.0 * abs(template.g)
    y = [element_abs_sum(template.with_n(int(n))) / scale for n in sizes]
    slope, _ = np.polyfit(np.log(np.asarray(sizes, dtype=float)), y, 1)
    return float(slope)


def lattice_sum_term0(q: float, n: int) -> float:
    """``(2/N) sum_{k=1}^{N-1} (N - k) / k^{2q}``."""
    k = np.arange(1, n, dtype=float)
    return float(2.0 / n * np.sum((n - k) * k ** (-2.0 * q)))


def zero_order_prefactor(kind, q: float, mu=None, n: Optional[int] = None, e: float = 0.0) -> float:
    """Constant ``C`` in ``I_q ~ C g^{2q} N^{1-2q}`` for ``q < 1/2``.

    ``CM_r``: ``A_q / ((1 - 2q)(1 - q))``. ``CM_t`` (and ``CM_h`` with sinh):
    ``mu^{2q} A_q int_0^1 2(1 - y) / sin^{2q}(mu y) dy``. A size-dependent
    ``mu = "2pi/N"`` needs ``n``.
    """
    kind = Kind(kind)
    _require_below_half(q, "the zero-order moment prefactor")
    a_q = a_q_gaussian(q, e)
    if kind is Kind.CM_R:
        return a_q / ((1.0 - 2.0 * q) * (1.0 - q))
    if kind not in (Kind.CM_T, Kind.CM_H):
        raise TheoryDomainError(f"zero-order prefactor not tabulated for {kind.value}")
    if isinstance(mu, str):
        if n is None:
            raise ValueError("mu = 2pi/N needs the matrix size n")
        mu = 2.0 * math.pi / n
    if mu is None or not mu > 0:
        raise ValueError(f"{kind.value} needs mu > 0, got {mu!r}")
    if kind is Kind.CM_T and not mu < math.pi:
        raise TheoryDomainError(f"CM_t prefactor needs mu < pi, got {mu}")
    trig = math.sin if kind is Kind.CM_T else math.sinh

    def smooth(y):
        x = mu * y
        ratio = 1.0 if x == 0.0 else x / trig(x)
        return 2.0 * (1.0 - y) * ratio ** (2.0 * q)

    # mu^{2q} / sin^{2q}(mu y) = (mu y / sin(mu y))^{2q} y^{-2q}
    integral, _ = integrate.quad(smooth, 0.0, 1.0, weight="alg", wvar=(-2.0 * q, 0.0),
                                 epsabs=1e-13, epsrel=1e-11)
    return a_q * integral


def solvable_limits(q: float, a: float, n: Optional[int] = None) -> float:
    """Large-N limit of the solvable sum ``f_N(q, a)`` in its natural scaling.

    ``q > 1/2``: ``f_N / N^{2q} -> pi^{-2q} [zeta(2q, a) + zeta(2q, 1 - a)]``;
    ``q < 1/2``: ``f_N / N -> Gamma(1/2 - q) / (sqrt(pi) Gamma(1 - q))``;
    ``q = 1/2``: ``f_N / N ~ (2/pi)[ln N - ln(pi/2) - (psi(a) + psi(1 - a))/2]``,
    which needs ``n``.
    """
    if not 0.0 < a < 1.0:
        raise ValueError(f"a must lie in (0, 1), got {a}")
    if q > 0.5:
        return math.pi ** (-2.0 * q) * (hurwitz_zeta(2.0 * q, a) + hurwitz_zeta(2.0 * q, 1.0 - a))
    if q < 0.5:
        return gamma_fn(0.5 - q) / (SQRT_PI * gamma_fn(1.0 - q))
    if n is None:
        raise ValueError("the q = 1/2 limit grows like ln N; pass n")
    return 2.0 / math.pi * (math.log(n) - math.log(math.pi / 2.0) - 0.5 * (digamma(a) + digamma(1.0 - a)))


def dq_solvable(q: float) -> float:
    if q == 0.5:
        raise TheoryDomainError("the solvable-case D_q jumps at q = 1/2")
    return (2.0 * q - 1.0) / (q - 1.0) if q < 0.5 else 0.0


REGIMES = ("zero_order", "strong_first_order", "weak", "solvable")


@dataclass(frozen=True)
class TheoryCurve:
    """``q -> D_q`` for one regime, with its domain of definition.

    ``validity`` is informational (e.g. ``t|q| << 1`` for the weak regime) and
    is not enforced.
    """

    regime: str
    kind: str
    params: Dict[str, float]
    func: Callable[[float], float] = field(repr=False, compare=False)
    domain: Callable[[float], bool] = field(repr=False, compare=False)
    validity: str = ""

    def __call__(self, q: float) -> float:
        if not self.domain(q):
            raise TheoryDomainError(f"{self.regime} D_q is singular or undefined at q={q}")
        return self.func(q)

    def tabulate(self, qs: Iterable[float], skip_invalid: bool = False) -> List[tuple]:
        rows = []
        for q in qs:
            q = float(q)
            if skip_invalid and not self.domain(q):
                continue
            rows.append((q, self(q)))
        return rows


def _not_half(q: float) -> bool:
    return abs(q - 0.5) > 1e-12


def theory_curve(regime: str, kind, g: float = 0.0, s: Optional[float] = None, rho_e: Optional[float] = None,
                 beta: Optional[int] = None, mu=None, e: float = 0.0) -> TheoryCurve:
    """Build a :class:`TheoryCurve`; ``s`` defaults to :func:`s_constant` for the kind."""
    kind_s = kind if isinstance(kind, str) else Kind(kind).value
    if regime == "solvable":
        return TheoryCurve("solvable", kind_s, {"a": g}, dq_solvable, _not_half)
    kind = Kind(kind)
    if regime == "weak":
        t = weak_t(kind, g, beta)
        return TheoryCurve("weak", kind.value, {"g": g, "t": t}, lambda q: 1.0 - t * q, lambda q: True,
                           validity="t|q| << 1")
    if regime in ("zero_order", "strong_first_order"):
        if kind is Kind.INTERMEDIATE:
            raise TheoryDomainError("the intermediate map has no perturbative expansion")
        if s is None:
            s = s_constant(kind, beta, mu)
        rho = gaussian_density(e) if rho_e is None else rho_e
        g_eff = 0.0 if regime == "zero_order" else g
        return TheoryCurve(regime, kind.value, {"g": g, "g_eff": g_eff, "s": s, "rho": rho},
                           lambda q: dq_strong(q, g_eff, s, rho), _not_half, validity="|g| << 1")
    raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")


THEORY_COLUMNS = ("regime", "kind", "g", "q", "Dq_theory")


def write_theory_csv(curves: Iterable[TheoryCurve], qs: Sequence[float], path, skip_invalid: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(THEORY_COLUMNS)
        for c in curves:
            g = c.params.get("g", c.params.get("a", 0.0))
            for q, d in c.tabulate(qs, skip_invalid=skip_invalid):
                w.writerow([c.regime, c.kind, repr(float(g)), repr(q), repr(float(d))])
