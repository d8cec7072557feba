"""Eigendecomposition, energy windows, density of states and perturbative eigenvectors."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as sla

from .ensembles import EnsembleSpec, MatrixSample


class DiagonalizationError(RuntimeError):
    def __init__(self, message: str, seed_path=None):
        super().__init__(f"{message} (sample {seed_path})")
        self.seed_path = seed_path


class ResonanceError(ValueError):
    """Perturbation theory requested for a near-degenerate diagonal."""


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues (or eigenphases in ``[0, 2 pi)``) in ascending order,
    with eigenvector ``vectors[:, a]`` paired to ``values[a]``."""

    values: np.ndarray
    vectors: np.ndarray
    kind_is_unitary: bool
    notes: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        self.values.setflags(write=False)
        self.vectors.setflags(write=False)

    @property
    def n(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class EnergyWindow:
    center: float = 0.0
    fraction: float = 1.0 / 16

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"window fraction must lie in (0, 1], got {self.fraction}")

    def count(self, n: int) -> int:
        k = int(math.floor(self.fraction * n + 0.5))
        if k < 1:
            raise ValueError(f"window fraction {self.fraction} keeps no eigenvector at N={n}")
        return min(k, n)


FULL_WINDOW = EnergyWindow(0.0, 1.0)


def _fix_phases(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-modulus component is real positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    pivot = vectors[idx, np.arange(vectors.shape[1])]
    return vectors * (np.abs(pivot) / pivot)[None, :]


def _degeneracy_notes(values: np.ndarray, scale: float) -> Tuple[str, ...]:
    if len(values) < 2:
        return ()
    gaps = np.diff(values)
    count = int(np.sum(gaps <= 1e-13 * max(scale, 1.0)))
    return (f"{count} numerically degenerate eigenvalue pair(s)",) if count else ()


def _hermitian_eig(m: np.ndarray, subset=None):
    try:
        return sla.eigh(m, driver="evr", subset_by_index=subset, check_finite=False)
    except (np.linalg.LinAlgError, ValueError):
        # evr occasionally reports failure on pathological inputs; evd is the fallback
        if subset is not None:
            raise
        return sla.eigh(m, driver="evd", check_finite=False)


def diagonalize(sample: MatrixSample) -> EigenSystem:
    """Full dense eigendecomposition of one sample.

    Unitary samples go through the complex Schur form, whose Schur vectors
    are exactly unitary and for a normal matrix are its eigenvectors.
    """
    m = sample.entries
    try:
        if sample.is_unitary:
            t, z = sla.schur(m, output="complex", check_finite=False)
            phases = np.mod(np.angle(np.diag(t)), 2.0 * np.pi)
            order = np.argsort(phases, kind="stable")
            values, vectors = phases[order], z[:, order]
        else:
            values, vectors = _hermitian_eig(m)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DiagonalizationError(f"eigensolver failed: {exc}", sample.seed_path) from exc
    vectors = _fix_phases(np.ascontiguousarray(vectors))
    return EigenSystem(
        values=np.ascontiguousarray(values),
        vectors=vectors,
        kind_is_unitary=sample.is_unitary,
        notes=_degeneracy_notes(values, float(np.max(np.abs(values), initial=1.0))),
    )


def select_window(es: EigenSystem, window: EnergyWindow) -> np.ndarray:
    """Indices of the ``round(f N)`` eigenvalues closest to the window center.

    Ties go to the lower index; the result is sorted. Unitary systems use
    every eigenvector.
    """
    n = len(es.values)
    if es.kind_is_unitary:
        return np.arange(n)
    k = window.count(n)
    order = np.argsort(np.abs(es.values - window.center), kind="stable")
    return np.sort(order[:k])


def window_vectors(sample: MatrixSample, window: EnergyWindow) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenpairs that :func:`select_window` would keep, computed without the full basis.

    For Hermitian samples only a band of central eigenpairs is computed; the
    band is accepted only if every eigenvalue outside it is provably farther
    from the center than the selected ones, otherwise the full decomposition
    is used. Returns ``(values, vectors)`` for the selected indices.
    """
    n = sample.spec.n
    if sample.is_unitary or window.fraction >= 0.5 or n < 256:
        es = diagonalize(sample)
        idx = select_window(es, window)
        return es.values[idx], es.vectors[:, idx]
    k = window.count(n)
    pad = max(k, int(4 * math.sqrt(n)))
    # window centers away from the middle of the spectrum shift the band too far to guess
    if window.center != 0.0:
        es = diagonalize(sample)
        idx = select_window(es, window)
        return es.values[idx], es.vectors[:, idx]
    lo = max(0, n // 2 - k // 2 - pad)
    hi = min(n - 1, n // 2 + k // 2 + pad)
    try:
        vals, vecs = _hermitian_eig(sample.entries, subset=(lo, hi))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DiagonalizationError(f"eigensolver failed: {exc}", sample.seed_path) from exc
    dist = np.abs(vals - window.center)
    order = np.argsort(dist, kind="stable")
    chosen = np.sort(order[:k])
    d_max = dist[order[k - 1]]
    low_ok = lo == 0 or (0 not in chosen and dist[0] > d_max)
    high_ok = hi == n - 1 or ((len(vals) - 1) not in chosen and dist[-1] > d_max)
    if not (low_ok and high_ok):
        es = diagonalize(sample)
        idx = select_window(es, window)
        return es.values[idx], es.vectors[:, idx]
    return vals[chosen], _fix_phases(np.ascontiguousarray(vecs[:, chosen]))


@dataclass(frozen=True)
class DensityOfStates:
    edges: np.ndarray
    density: np.ndarray

    def __call__(self, e):
        e = np.asarray(e, dtype=float)
        i = np.searchsorted(self.edges, e, side="right") - 1
        # the last edge belongs to the last bin, as in np.histogram
        i = np.where(e == self.edges[-1], len(self.density) - 1, i)
        inside = (i >= 0) & (i < len(self.density))
        out = np.where(inside, self.density[np.clip(i, 0, len(self.density) - 1)], 0.0)
        return out if out.ndim else float(out)

    @property
    def bin_width(self) -> np.ndarray:
        return np.diff(self.edges)


def density_of_states(
    spectra: Iterable[np.ndarray],
    bin_width: Optional[float] = None,
    value_range: Optional[Tuple[float, float]] = None,
) -> DensityOfStates:
    """Histogram estimate of the mean eigenvalue density, normalized to unit area.

    Bins default to the Freedman-Diaconis rule on the pooled eigenvalues.
    """
    parts = [np.ravel(np.asarray(s, dtype=float)) for s in spectra]
    pooled = np.concatenate(parts) if parts else np.array([])
    if pooled.size == 0:
        raise ValueError("density_of_states needs at least one eigenvalue")
    lo, hi = value_range if value_range is not None else (pooled.min(), pooled.max())
    if bin_width is None:
        edges = np.histogram_bin_edges(pooled, bins="fd", range=(lo, hi))
    else:
        nbins = max(1, int(math.ceil((hi - lo) / bin_width)))
        edges = lo + bin_width * np.arange(nbins + 1)
    density, edges = np.histogram(pooled, bins=edges, density=True)
    return DensityOfStates(edges=edges, density=density)


def _split_diagonal(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d = np.diag(m).copy()
    off = m.copy()
    off[np.diag_indices(len(d))] = 0.0
    return d, off


def _check_gaps(d: np.ndarray, off: np.ndarray, alpha: int) -> np.ndarray:
    gaps = d[alpha] - d
    others = np.delete(np.arange(len(d)), alpha)
    scale = float(np.max(np.abs(off))) if off.size else 0.0
    g = np.abs(gaps[others])
    j = int(np.argmin(g))
    if g[j] < 10.0 * scale:
        raise ResonanceError(
            f"diagonal entries {alpha} and {int(others[j])} are resonant: "
            f"gap {g[j]:.3g} < 10 x max off-diagonal {scale:.3g}"
        )
    return gaps


def perturbative_eigvec(sample: MatrixSample, alpha: int, order: int = 1) -> np.ndarray:
    """Rayleigh-Schroedinger eigenvector around the diagonal, with ``psi[alpha] = 1``.

    The off-diagonal part ``g mu_mn`` is read straight from the matrix, so the
    coupling never has to be separated out. Order 1 keeps
    ``M_m,alpha / (p_alpha - p_m)``; order 2 adds
    ``sum_n M_mn M_n,alpha / ((p_alpha - p_n)(p_alpha - p_m))``.
    """
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    d, off = _split_diagonal(sample.entries)
    n = len(d)
    if n == 1 or not np.any(off):
        e = np.zeros(n, dtype=complex)
        e[alpha] = 1.0
        return e
    gaps = _check_gaps(d, off, alpha)
    inv = np.zeros(n, dtype=complex)
    mask = np.arange(n) != alpha
    inv[mask] = 1.0 / gaps[mask]
    first = off[:, alpha] * inv
    psi = first.copy()
    if order == 2:
        # off has zero diagonal, so n = m drops out; n = alpha drops out through inv
        psi += (off @ first) * inv
    psi[alpha] = 1.0
    return psi


def perturbative_eigenvalue(sample: MatrixSample, alpha: int) -> complex:
    """``p_alpha + sum_n M_alpha,n M_n,alpha / (p_alpha - p_n)``, error O(g^3)."""
    d, off = _split_diagonal(sample.entries)
    gaps = _check_gaps(d, off, alpha)
    mask = np.arange(len(d)) != alpha
    val = d[alpha] + np.sum(off[alpha, mask] * off[mask, alpha] / gaps[mask])
    return complex(val)


class EigenCache:
    """On-disk cache of eigensystems keyed by ``(spec, master_seed, realization)``."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(spec: EnsembleSpec, master_seed: int, realization: int) -> str:
        payload = json.dumps(
            [spec.kind.value, repr(float(spec.g)), spec.n, spec.mu if isinstance(spec.mu, str) else (None if spec.mu is None else repr(float(spec.mu))), spec.beta, int(master_seed), int(realization)]
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:32]

    def _path(self, spec, master_seed, realization) -> Path:
        return self.directory / f"{self.key(spec, master_seed, realization)}.npz"

    def get(self, spec, master_seed, realization) -> Optional[EigenSystem]:
        path = self._path(spec, master_seed, realization)
        if not path.exists():
            return None
        with np.load(path) as data:
            return EigenSystem(
                values=data["values"].copy(),
                vectors=data["vectors"].copy(),
                kind_is_unitary=bool(data["unitary"]),
            )

    def put(self, spec, master_seed, realization, es: EigenSystem) -> None:
        path = self._path(spec, master_seed, realization)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, values=es.values, vectors=es.vectors, unitary=es.kind_is_unitary)
        tmp.replace(path)
