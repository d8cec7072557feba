"""Finite-size scaling fits for D_q and the Delta_q <-> Delta_{1-q} comparison."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .moments import MomentRecord


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class DimensionEstimate:
    """``D_q`` from ``log I_q = a + b log N + c / N``, ``D_q = -b / (q - 1)``.

    ``dq_err`` combines the realization scatter propagated through the fit
    (``dq_err_scatter``) with the residual-based error (``dq_err_fit``): the
    scatter error is inflated by ``sqrt(chi2 / dof)`` when the residuals are
    larger than the scatter explains.
    """

    kind: str
    g: float
    q: float
    dq: float
    dq_err: float
    a: float
    b: float
    c: float
    n_sizes: int
    dq_err_scatter: float = float("nan")
    dq_err_fit: float = float("nan")

    @property
    def delta(self) -> float:
        return (self.dq - 1.0) * (self.q - 1.0)

    @property
    def delta_err(self) -> float:
        return self.dq_err * abs(self.q - 1.0)


def fit_dimension(records: Sequence[MomentRecord]) -> DimensionEstimate:
    """Weighted least-squares fit over sizes at fixed ``(kind, g, q)``.

    Points are weighted by ``1 / var(log I_q)`` with
    ``var = (std / (mean sqrt(R)))^2``; if any point has zero spread (exact
    data) the fit is unweighted.
    """
    if not records:
        raise FitError("no records to fit")
    q = records[0].q
    if any(r.q != q for r in records):
        raise FitError("records mix different q values")
    if q == 1.0:
        raise FitError("D_1 is defined only as a limit; q = 1 cannot be fitted")
    sizes = np.array([r.n for r in records], dtype=float)
    if len(np.unique(sizes)) < 3:
        raise FitError(f"need >= 3 distinct sizes for the 3-parameter fit, got {len(np.unique(sizes))}")
    means = np.array([r.mean for r in records])
    if np.any(means <= 0) or not np.all(np.isfinite(means)):
        raise FitError("moment means must be positive and finite")
    y = np.log(means)
    x = np.column_stack([np.ones_like(sizes), np.log(sizes), 1.0 / sizes])
    sig = np.array([r.std / (r.mean * math.sqrt(r.realizations)) for r in records])
    weighted = bool(np.all(sig > 0))
    w = 1.0 / sig if weighted else np.ones_like(y)
    xw = x * w[:, None]
    yw = y * w
    coef, _, rank, sv = np.linalg.lstsq(xw, yw, rcond=None)
    if rank < 3 or sv[-1] <= sv[0] * 1e-14:
        raise FitError("singular design matrix for the size fit")
    xtx_inv = np.linalg.inv(xw.T @ xw)
    resid = yw - xw @ coef
    dof = len(y) - 3
    chi2 = float(resid @ resid)
    red = chi2 / dof if dof > 0 else float("nan")
    scale = abs(q - 1.0)
    if weighted:
        err_scatter = math.sqrt(xtx_inv[1, 1]) / scale
        err_fit = math.sqrt(xtx_inv[1, 1] * red) / scale if dof > 0 else float("nan")
        infl = max(1.0, red) if dof > 0 else 1.0
        err = math.sqrt(xtx_inv[1, 1] * infl) / scale
    else:
        err_scatter = 0.0
        err_fit = math.sqrt(xtx_inv[1, 1] * red) / scale if dof > 0 else float("nan")
        err = err_fit if dof > 0 else 0.0
    a, b, c = (float(v) for v in coef)
    return DimensionEstimate(
        kind=records[0].kind, g=records[0].g, q=float(q), dq=-b / (q - 1.0), dq_err=float(err),
        a=a, b=b, c=c, n_sizes=len(records), dq_err_scatter=float(err_scatter), dq_err_fit=float(err_fit),
    )


def fit_all(records: Iterable[MomentRecord], skip_q_one: bool = True) -> List[DimensionEstimate]:
    """Group records by ``(kind, g, mu, beta, q)`` and fit each group."""
    groups: Dict[tuple, List[MomentRecord]] = {}
    for r in records:
        if skip_q_one and r.q == 1.0:
            continue
        groups.setdefault((r.kind, r.g, str(r.mu), r.beta, r.q), []).append(r)
    return [fit_dimension(sorted(v, key=lambda r: r.n)) for v in groups.values()]


@dataclass(frozen=True)
class GSlope:
    slope: float
    intercept: float
    stderr: float


def fit_g_slope(records: Sequence[MomentRecord]) -> GSlope:
    """OLS of ``ln(I_q / N^{1-2q})`` against ``ln g`` at fixed ``(kind, q, N)``."""
    if len(records) < 3:
        raise FitError(f"need >= 3 couplings, got {len(records)}")
    q = records[0].q
    n = records[0].n
    if any(r.q != q or r.n != n for r in records):
        raise FitError("records must share q and N")
    if not q < 0.5:
        raise FitError(f"the g^(2q) law holds for q < 1/2 only, got q={q}")
    g = np.array([r.g for r in records], dtype=float)
    m = np.array([r.mean for r in records], dtype=float)
    if np.any(m <= 0) or np.any(g <= 0):
        raise FitError("g and I_q must be positive")
    y = np.log(m) - (1.0 - 2.0 * q) * math.log(n)
    res = stats.linregress(np.log(g), y)
    return GSlope(slope=float(res.slope), intercept=float(res.intercept), stderr=float(res.stderr))


@dataclass(frozen=True)
class SymmetryReport:
    kind: str
    g: float
    q: np.ndarray
    residual: np.ndarray
    residual_err: np.ndarray
    verdict: str
    consistent_fraction: float

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residual)))

    def excess(self, q_min: float = -np.inf, q_max: float = np.inf, nsigma: float = 2.0) -> np.ndarray:
        """``|r| - nsigma * err`` on the q range; positive entries lie outside the band."""
        sel = (self.q >= q_min - 1e-12) & (self.q <= q_max + 1e-12)
        return np.abs(self.residual[sel]) - nsigma * self.residual_err[sel]


def _key(q: float) -> float:
    return round(float(q), 9)


def symmetry_residuals(estimates: Sequence[DimensionEstimate], threshold: float = 0.9,
                       nsigma: float = 2.0) -> SymmetryReport:
    """``r(q) = Delta_q - Delta_{1-q}`` over a grid paired under ``q -> 1 - q``.

    ``Delta_1 = 0`` is supplied when q = 1 is absent (it is never fitted).
    The verdict is ``consistent`` when ``|r| <= nsigma * err`` for at least
    ``threshold`` of the grid.
    """
    if not estimates:
        raise FitError("no estimates")
    table = {_key(e.q): (e.delta, e.delta_err) for e in estimates}
    if _key(1.0) not in table and _key(0.0) in table:
        table[_key(1.0)] = (0.0, 0.0)
    missing = [q for q in table if _key(1.0 - q) not in table]
    if missing:
        raise FitError(f"q values without a 1-q partner: {sorted(missing)}")
    qs = np.array(sorted(table))
    res = np.empty(len(qs))
    err = np.empty(len(qs))
    for i, q in enumerate(qs):
        d, de = table[q]
        dp, dpe = table[_key(1.0 - q)]
        res[i] = 0.0 if q == 0.5 else d - dp
        err[i] = math.hypot(de, dpe)
    # antisymmetry holds by construction; a failure here means the pairing is broken
    assert np.array_equal(res, -res[::-1]), "residuals are not antisymmetric under q -> 1-q"
    ok = np.abs(res) <= nsigma * err
    frac = float(np.mean(ok))
    return SymmetryReport(
        kind=estimates[0].kind, g=estimates[0].g, q=qs, residual=res, residual_err=err,
        verdict="consistent" if frac >= threshold else "inconsistent", consistent_fraction=frac,
    )


DIMENSION_COLUMNS = ("kind", "g", "q", "Dq", "Dq_err", "Delta_q", "a", "b", "c")
SYMMETRY_COLUMNS = ("kind", "g", "q", "residual", "residual_err")


def write_dimensions_csv(estimates: Iterable[DimensionEstimate], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIMENSION_COLUMNS)
        for e in estimates:
            w.writerow([e.kind, repr(float(e.g)), repr(e.q), repr(e.dq), repr(e.dq_err), repr(e.delta),
                        repr(e.a), repr(e.b), repr(e.c)])


def write_symmetry_csv(reports: Iterable[SymmetryReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SYMMETRY_COLUMNS)
        for rep in reports:
            for q, r, e in zip(rep.q, rep.residual, rep.residual_err):
                w.writerow([rep.kind, repr(float(rep.g)), repr(float(q)), repr(float(r)), repr(float(e))])
