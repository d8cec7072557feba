"""Eigenfunction moments ``I_q`` and the exactly solvable RS column vectors."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .ensembles import EnsembleSpec, Kind, sample
from .spectral import FULL_WINDOW, EigenCache, EnergyWindow, diagonalize, select_window, window_vectors

log = logging.getLogger(__name__)

DEFAULT_BLOCK = 4


def default_q_grid(start: float = -3.0, stop: float = 4.0, step: float = 0.25, exclude_one: bool = True) -> np.ndarray:
    """Evenly spaced q values, endpoints included, with q = 1 dropped."""
    count = int(round((stop - start) / step)) + 1
    qs = np.round(start + step * np.arange(count), 12)
    if exclude_one:
        qs = qs[np.abs(qs - 1.0) > 1e-12]
    return qs


def coarse_grain(probs: np.ndarray, block: int) -> np.ndarray:
    """Sum probabilities over consecutive blocks along axis 0.

    A trailing partial block is merged into the previous one.
    """
    if block < 1:
        raise ValueError(f"block must be >= 1, got {block}")
    if block == 1:
        return probs
    n = probs.shape[0]
    nblocks = max(1, n // block)
    starts = np.arange(nblocks) * block
    return np.add.reduceat(probs, starts, axis=0)


def _power_sum(w: np.ndarray, q: float) -> np.ndarray:
    if q < 0 and np.any(w == 0):
        raise ValueError(
            "negative-q moment of a vector with an exactly-zero (coarse-grained) component"
        )
    return np.sum(np.power(w, q), axis=0)


def moment_of_vector(psi: np.ndarray, q: float, block: int = 1) -> float:
    """``sum_i (sum_{j<b} |psi_{b i + j}|^2)^q``; plain ``sum_j |psi_j|^{2q}`` for ``b = 1``."""
    probs = np.abs(np.asarray(psi)) ** 2
    return float(_power_sum(coarse_grain(probs, block), q))


def block_for(q: float, block: int) -> int:
    """Coarse-graining is applied to negative moments only."""
    return block if q < 0 else 1


def vector_moments(
    vectors: np.ndarray, qs: Sequence[float], block: int = DEFAULT_BLOCK, exclude_peak: bool = False
) -> np.ndarray:
    """Moments of each column for each q, shape ``(len(qs), n_vectors)``.

    With ``exclude_peak`` the largest component (the site the state is
    localized on at small coupling) is left out of the sum; this isolates the
    ``g^{2q}`` tail that carries the perturbative scaling.
    """
    probs = np.abs(vectors) ** 2
    cg = coarse_grain(probs, block) if block > 1 and any(q < 0 for q in qs) else None
    cols = np.arange(probs.shape[1])
    peak_rows = np.argmax(probs, axis=0)
    out = np.empty((len(qs), probs.shape[1]))
    for i, q in enumerate(qs):
        if q < 0 and cg is not None:
            w, rows = cg, np.minimum(peak_rows // block, cg.shape[0] - 1)
        else:
            w, rows = probs, peak_rows
        out[i] = _power_sum(w, q)
        if exclude_peak:
            if q > 0:
                # drop the peak before summing so the small tail keeps full precision
                w = w.copy()
                w[rows, cols] = 0.0
                out[i] = _power_sum(w, q)
            else:
                out[i] -= np.power(w[rows, cols], q)
    return out


@dataclass(frozen=True)
class MomentRecord:
    kind: str
    g: float
    mu: Union[float, str, None]
    beta: Optional[int]
    q: float
    n: int
    realizations: int
    mean: float
    std: float
    window_fraction: float
    block: int
    peak_excluded: bool = False

    @property
    def sem(self) -> float:
        """Standard error of the mean over realizations."""
        return self.std / math.sqrt(self.realizations)


CSV_COLUMNS = ("kind", "g", "mu", "beta", "q", "N", "R", "f", "block", "mean", "std")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_moments_csv(records: Iterable[MomentRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(
                [r.kind, _fmt(float(r.g)), _fmt(r.mu), _fmt(r.beta), _fmt(float(r.q)), r.n, r.realizations,
                 _fmt(float(r.window_fraction)), r.block, _fmt(float(r.mean)), _fmt(float(r.std))]
            )


def _parse_mu(s: str):
    if s == "":
        return None
    try:
        return float(s)
    except ValueError:
        return s


def read_moments_csv(path, peak_excluded: bool = False) -> List[MomentRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(
                MomentRecord(
                    kind=row["kind"], g=float(row["g"]), mu=_parse_mu(row["mu"]),
                    beta=int(row["beta"]) if row["beta"] else None, q=float(row["q"]), n=int(row["N"]),
                    realizations=int(row["R"]), mean=float(row["mean"]), std=float(row["std"]),
                    window_fraction=float(row["f"]), block=int(row["block"]), peak_excluded=peak_excluded,
                )
            )
    return out


def default_window(kind: Kind) -> EnergyWindow:
    return FULL_WINDOW if Kind(kind).is_unitary else EnergyWindow(0.0, 1.0 / 16)


RealizationBudget = Union[int, Mapping[int, int], Callable[[int], int]]


def realizations_for(budget: RealizationBudget, n: int) -> int:
    if callable(budget):
        r = budget(n)
    elif isinstance(budget, Mapping):
        r = budget[n]
    else:
        r = budget
    if r < 1:
        raise ValueError(f"need at least one realization at N={n}, got {r}")
    return int(r)


def realization_moments(
    spec: EnsembleSpec,
    qs: Sequence[float],
    window: EnergyWindow,
    master_seed: int,
    realization: int,
    block: int = DEFAULT_BLOCK,
    exclude_peak: bool = False,
    cache: Optional[EigenCache] = None,
) -> np.ndarray:
    """Window-averaged moments of one realization, one value per q."""
    if cache is not None:
        es = cache.get(spec, master_seed, realization)
        if es is None:
            es = diagonalize(sample(spec, master_seed, realization))
            cache.put(spec, master_seed, realization, es)
        vecs = es.vectors[:, select_window(es, window)]
    else:
        _, vecs = window_vectors(sample(spec, master_seed, realization), window)
    return vector_moments(vecs, qs, block=block, exclude_peak=exclude_peak).mean(axis=1)


def summarize(spec: EnsembleSpec, qs, per_realization: np.ndarray, window: EnergyWindow, block: int,
              exclude_peak: bool = False) -> List[MomentRecord]:
    """Reduce a ``(R, len(qs))`` table of per-realization moments to records.

    The reduction runs over realizations in index order, so the result does
    not depend on how the realizations were scheduled.
    """
    per_realization = np.asarray(per_realization, dtype=float)
    r = per_realization.shape[0]
    means = per_realization.mean(axis=0)
    stds = per_realization.std(axis=0, ddof=1) if r > 1 else np.zeros(len(qs))
    return [
        MomentRecord(
            kind=spec.kind.value, g=float(spec.g), mu=spec.mu, beta=spec.beta, q=float(q), n=spec.n,
            realizations=r, mean=float(m), std=float(s), window_fraction=window.fraction,
            block=block_for(q, block), peak_excluded=exclude_peak,
        )
        for q, m, s in zip(qs, means, stds)
    ]


def estimate_moments(
    template: EnsembleSpec,
    sizes: Sequence[int],
    qs: Sequence[float],
    window: Optional[EnergyWindow] = None,
    realizations: RealizationBudget = 2,
    master_seed: int = 0,
    block: int = DEFAULT_BLOCK,
    exclude_peak: bool = False,
    cache: Optional[EigenCache] = None,
) -> List[MomentRecord]:
    """Mean moments ``I_q`` and their spread over realizations for every size.

    Each realization contributes the average over its windowed eigenvectors;
    averaging over a narrow window stands in for the ``delta(E - lambda)/rho(E)``
    weight. Hermitian kinds default to the ``N/16`` eigenvectors nearest
    ``E = 0``, unitary kinds to all eigenvectors.
    """
    window = window or default_window(template.kind)
    qs = [float(q) for q in qs]
    records: List[MomentRecord] = []
    for n in sizes:
        spec = template.with_n(int(n))
        r_count = realizations_for(realizations, spec.n)
        table = np.empty((r_count, len(qs)))
        for r in range(r_count):
            try:
                table[r] = realization_moments(spec, qs, window, master_seed, r, block, exclude_peak, cache)
            except Exception as exc:
                raise RuntimeError(f"moment evaluation failed at N={spec.n}, realization={r}: {exc}") from exc
        log.debug("N=%d: %d realizations done", spec.n, r_count)
        records.extend(summarize(spec, qs, table, window, block, exclude_peak))
    return records


def solvable_vector(a: float, n: int) -> np.ndarray:
    """Column ``sin(pi a) / (N sin(pi (p + a) / N))`` for ``p = 0 .. N-1``."""
    p = np.arange(n)
    return math.sin(math.pi * a) / (n * np.sin(math.pi * (p + a) / n))


def solvable_moments(a: float, q: float, n: int) -> Tuple[float, float]:
    """``(mu_2q, f_N(q, a))`` for the solvable column vector.

    ``mu_2q = sum_p |psi_p|^{2q} = (sin(pi a)/N)^{2q} f_N(q, a)`` and
    ``f_N = sum_p |sin(pi (p + a)/N)|^{-2q}``.
    """
    if float(a).is_integer():
        raise ValueError(f"a must not be an integer, got {a}")
    s = np.abs(np.sin(math.pi * (np.arange(n) + a) / n))
    log_s = np.log(s)
    f_n = float(np.sum(np.exp(-2.0 * q * log_s)))
    log_pref = 2.0 * q * (math.log(abs(math.sin(math.pi * a))) - math.log(n))
    mu = float(np.sum(np.exp(log_pref - 2.0 * q * log_s)))
    return mu, f_n


def solvable_records(a: float, qs: Sequence[float], sizes: Sequence[int]) -> List[MomentRecord]:
    """Exact moment table for the solvable vectors in :class:`MomentRecord` form."""
    return [
        MomentRecord(kind="solvable", g=float(a), mu=None, beta=None, q=float(q), n=int(n), realizations=1,
                     mean=solvable_moments(a, q, n)[0], std=0.0, window_fraction=1.0, block=1)
        for n in sizes
        for q in qs
    ]
