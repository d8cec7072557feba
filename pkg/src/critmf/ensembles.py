"""Seed-reproducible samplers for the critical random matrix ensembles.

Six kinds are supported:

* ``CM_r``, ``CM_h``, ``CM_t``: Calogero-Moser Lax matrices,
  ``M_mn = p_m delta_mn + i g (1 - delta_mn) V(m - n)`` with Gaussian ``p_m``
  and ``V(k)`` equal to ``1/k``, ``mu / (N sinh(mu k / N))`` or
  ``mu / (N sin(mu k / N))``.
* ``RS``: Ruijsenaars-Schneider unitary matrices,
  ``M_mn = exp(i Phi_m) sin(pi g) / (N sin(pi (m - n + g) / N))``.
* ``IntermediateMap``: the RS form with ``g = a N``.
* ``CrBRME``: critical banded Gaussian matrices with variance
  ``1/2 [1 + ((m - n)/g)^2]^-1`` off the diagonal and ``1/beta`` on it.

Every sample is a pure function of ``(spec, master_seed, realization)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import toeplitz

MU_2PI_OVER_N = "2pi/N"


class Kind(str, enum.Enum):
    CM_R = "CM_r"
    CM_H = "CM_h"
    CM_T = "CM_t"
    RS = "RS"
    INTERMEDIATE = "IntermediateMap"
    CRBRME = "CrBRME"

    @property
    def is_unitary(self) -> bool:
        return self in (Kind.RS, Kind.INTERMEDIATE)

    @property
    def is_cm(self) -> bool:
        return self in (Kind.CM_R, Kind.CM_H, Kind.CM_T)


class InvalidSpec(ValueError):
    """Raised when an ensemble specification violates its invariants."""


def intermediate_denominator(a: float, tol: float = 1e-12) -> Optional[int]:
    """Return ``b`` if ``a == 1/b`` for an integer ``b >= 2``, else ``None``."""
    if a == 0:
        return None
    inv = 1.0 / a
    b = round(inv)
    if b >= 2 and abs(inv - b) <= tol * max(1.0, abs(inv)):
        return int(b)
    return None


def round_up_congruent(n: int, b: int) -> int:
    """Smallest ``n' >= n`` with ``n' = 1 (mod b)``."""
    return n + ((1 - n) % b)


@dataclass(frozen=True)
class EnsembleSpec:
    """Which ensemble to sample and at what size.

    For ``IntermediateMap`` the ``g`` field holds ``a``; the effective RS
    coupling is ``a * n``. ``mu`` may be the token ``"2pi/N"``, resolved
    against ``n`` when sampling.
    """

    kind: Kind
    g: float
    n: int
    mu: Union[float, str, None] = None
    beta: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        kind = self.kind
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise InvalidSpec(f"matrix size must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if not math.isfinite(self.g):
            raise InvalidSpec(f"coupling must be finite, got {self.g!r}")
        needs_mu = kind in (Kind.CM_H, Kind.CM_T)
        if needs_mu and self.mu is None:
            raise InvalidSpec(f"{kind.value} requires mu")
        if not needs_mu and self.mu is not None:
            raise InvalidSpec(f"mu is only meaningful for CM_h and CM_t, not {kind.value}")
        if kind is Kind.CRBRME:
            if self.beta not in (1, 2):
                raise InvalidSpec(f"CrBRME requires beta in {{1, 2}}, got {self.beta!r}")
            if self.g == 0:
                raise InvalidSpec("CrBRME bandwidth g must be nonzero")
        elif self.beta is not None:
            raise InvalidSpec(f"beta is only meaningful for CrBRME, not {kind.value}")
        if needs_mu:
            if isinstance(self.mu, str) and self.mu != MU_2PI_OVER_N:
                raise InvalidSpec(f"mu must be a positive number or {MU_2PI_OVER_N!r}, got {self.mu!r}")
            mu = self.resolved_mu()
            if not mu > 0:
                raise InvalidSpec(f"mu must be positive, got {mu}")
            # V(k) for CM_t has poles where mu k / N is a multiple of pi
            if kind is Kind.CM_T and mu >= math.pi * self.n / (self.n - 1):
                raise InvalidSpec(
                    f"CM_t needs mu < pi N/(N-1) = {math.pi * self.n / (self.n - 1):.6g} "
                    f"to avoid divergent entries, got mu = {mu:.6g}"
                )
        if kind is Kind.INTERMEDIATE:
            b = intermediate_denominator(self.g)
            if b is not None and self.n % b != 1:
                raise InvalidSpec(
                    f"IntermediateMap with a = 1/{b} needs n = 1 (mod {b}); "
                    f"got n = {self.n}, nearest valid size is {round_up_congruent(self.n, b)}"
                )

    def resolved_mu(self) -> Optional[float]:
        if self.mu is None:
            return None
        if isinstance(self.mu, str):
            return 2.0 * math.pi / self.n
        return float(self.mu)

    @property
    def coupling(self) -> float:
        """The coupling entering the matrix elements (``a N`` for the intermediate map)."""
        if self.kind is Kind.INTERMEDIATE:
            return self.g * self.n
        return self.g

    def with_n(self, n: int) -> "EnsembleSpec":
        return replace(self, n=n)

    @property
    def flags(self) -> Tuple[str, ...]:
        out = []
        if self.kind.is_unitary and float(self.coupling).is_integer():
            out.append("integer-coupling: matrix is a phased permutation")
        return tuple(out)


@dataclass(frozen=True)
class MatrixSample:
    spec: EnsembleSpec
    entries: np.ndarray
    seed_path: Optional[Tuple[int, int]] = None
    flags: Tuple[str, ...] = field(default=())

    @property
    def is_unitary(self) -> bool:
        return self.spec.kind.is_unitary


def rng_for(master_seed: int, realization: int) -> np.random.Generator:
    """Independent generator for one realization.

    ``SeedSequence`` mixes the spawn key into the entropy pool, so distinct
    ``(master_seed, realization)`` pairs give non-overlapping PCG64 streams.
    """
    if realization < 0:
        raise ValueError(f"realization index must be >= 0, got {realization}")
    ss = np.random.SeedSequence(entropy=int(master_seed) & (2**64 - 1), spawn_key=(int(realization),))
    return np.random.Generator(np.random.PCG64(ss))


def cm_kernel(spec: EnsembleSpec, k: np.ndarray) -> np.ndarray:
    """``V(k)`` for the CM kinds; ``k`` must be nonzero."""
    k = np.asarray(k, dtype=float)
    n = spec.n
    if spec.kind is Kind.CM_R:
        return 1.0 / k
    mu = spec.resolved_mu()
    if spec.kind is Kind.CM_H:
        return mu / (n * np.sinh(mu * k / n))
    if spec.kind is Kind.CM_T:
        return mu / (n * np.sin(mu * k / n))
    raise InvalidSpec(f"{spec.kind.value} has no CM kernel")


def rs_kernel(coupling: float, n: int, k: np.ndarray) -> np.ndarray:
    """``sin(pi g) / (N sin(pi (k + g) / N))`` for integer offsets ``k``.

    At integer ``g`` the 0/0 points are replaced by their limit, which makes
    the matrix a phased permutation.
    """
    k = np.asarray(k)
    if float(coupling).is_integer():
        gi = int(coupling)
        out = np.zeros(k.shape)
        hit = (k + gi) % n == 0
        j = (k[hit] + gi) // n
        out[hit] = np.where((gi - j) % 2 == 0, 1.0, -1.0)
        return out
    return math.sin(math.pi * coupling) / (n * np.sin(math.pi * (k + coupling) / n))


def cm_matrix(p: np.ndarray, g: float, spec: EnsembleSpec) -> np.ndarray:
    """Assemble a CM matrix from a given diagonal; exactly Hermitian."""
    n = len(p)
    k = np.arange(1, n)
    col = np.zeros(n, dtype=complex)
    col[1:] = 1j * g * cm_kernel(spec, k)
    # row entries are V(-k) = -V(k); conj(i g V(k)) = -i g V(k) exactly
    m = toeplitz(col, np.conj(col))
    m[np.diag_indices(n)] = p
    return m


def rs_matrix(phases: np.ndarray, coupling: float) -> np.ndarray:
    n = len(phases)
    k = np.arange(n)
    col = rs_kernel(coupling, n, k)
    row = rs_kernel(coupling, n, -k)
    return np.exp(1j * phases)[:, None] * toeplitz(col, row)


def crbrme_variance(g: float, k: np.ndarray) -> np.ndarray:
    """Off-diagonal ``<|M_mn|^2>`` at distance ``k = m - n != 0``."""
    k = np.asarray(k, dtype=float)
    return 0.5 / (1.0 + (k / g) ** 2)


def _crbrme_matrix(spec: EnsembleSpec, rng: np.random.Generator) -> np.ndarray:
    n = spec.n
    var = np.zeros(n)
    var[1:] = crbrme_variance(spec.g, np.arange(1, n))
    sd = np.sqrt(toeplitz(var))
    iu = np.triu_indices(n, 1)
    if spec.beta == 1:
        m = np.zeros((n, n))
        m[np.diag_indices(n)] = rng.standard_normal(n)
        m[iu] = rng.standard_normal(len(iu[0])) * sd[iu]
        m.T[iu] = m[iu]
        return m.astype(complex)
    m = np.zeros((n, n), dtype=complex)
    m[np.diag_indices(n)] = rng.standard_normal(n) * math.sqrt(0.5)
    re = rng.standard_normal(len(iu[0]))
    im = rng.standard_normal(len(iu[0]))
    m[iu] = (re + 1j * im) * (sd[iu] * math.sqrt(0.5))
    m.T[iu] = np.conj(m[iu])
    return m


def sample(spec: EnsembleSpec, master_seed: int, realization: int) -> MatrixSample:
    """Draw the matrix for substream ``(master_seed, realization)``.

    The random diagonal (or phases) is always drawn first, so samples with
    the same seed path but different couplings share their disorder.
    """
    rng = rng_for(master_seed, realization)
    kind = spec.kind
    if kind.is_cm:
        p = rng.standard_normal(spec.n)
        m = cm_matrix(p, spec.g, spec)
    elif kind.is_unitary:
        phases = rng.uniform(0.0, 2.0 * math.pi, spec.n)
        m = rs_matrix(phases, spec.coupling)
    else:
        m = _crbrme_matrix(spec, rng)
    return MatrixSample(spec=spec, entries=m, seed_path=(int(master_seed), int(realization)), flags=spec.flags)


def element_abs_sum(spec: EnsembleSpec) -> float:
    """``(1/N) <sum_{m != n} |M_mn|>`` for size ``spec.n``.

    Exact for the deterministic-modulus kinds; for CrBRME the expectation of
    the Gaussian modulus is used (half-normal for beta=1, Rayleigh for beta=2).
    """
    n = spec.n
    k = np.arange(1, n)
    w = (n - k).astype(float)
    kind = spec.kind
    if kind.is_cm:
        a = np.abs(spec.g * cm_kernel(spec, k))
        total = 2.0 * np.sum(w * a)
    elif kind.is_unitary:
        c = spec.coupling
        total = np.sum(w * (np.abs(rs_kernel(c, n, k)) + np.abs(rs_kernel(c, n, -k))))
    else:
        var = crbrme_variance(spec.g, k)
        if spec.beta == 1:
            mean_abs = np.sqrt(2.0 * var / math.pi)
        else:
            mean_abs = 0.5 * np.sqrt(math.pi * var)
        total = 2.0 * np.sum(w * mean_abs)
    return float(total / n)
