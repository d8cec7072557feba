"""Experiment runs: scheduling, cell caching, fitting and report emission."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .ensembles import Kind, sample
from .moments import (
    MomentRecord, default_window, solvable_records, summarize, vector_moments,
    write_moments_csv,
)
from .scaling import (
    FitError, fit_all, fit_g_slope, symmetry_residuals, write_dimensions_csv, write_symmetry_csv,
)
from .spectral import EigenCache, EnergyWindow, diagonalize, select_window, window_vectors
from .theory import TheoryCurve, TheoryDomainError, theory_curve, write_theory_csv

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    directory: Path
    failures: List[str] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 1 if self.failures else 0


def _window(cfg: ExperimentConfig) -> EnergyWindow:
    if cfg.window_fraction is not None and not Kind(cfg.kind).is_unitary:
        return EnergyWindow(0.0, cfg.window_fraction)
    return default_window(Kind(cfg.kind))


def _cell_key(cfg: ExperimentConfig, g: float, n: int, r_count: int, window: EnergyWindow) -> str:
    payload = json.dumps([cfg.kind, repr(float(g)), str(cfg.mu), cfg.beta, n, r_count, [repr(q) for q in cfg.q],
                          window.center, window.fraction, cfg.block, cfg.master_seed, cfg.g_slope])
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def _realization_job(args) -> Tuple[int, np.ndarray, Optional[np.ndarray]]:
    cfg, g, n, r, window, cache_dir = args
    spec = cfg.spec(g, n)
    if cache_dir is not None:
        cache = EigenCache(cache_dir)
        es = cache.get(spec, cfg.master_seed, r)
        if es is None:
            es = diagonalize(sample(spec, cfg.master_seed, r))
            cache.put(spec, cfg.master_seed, r, es)
        vecs = es.vectors[:, select_window(es, window)]
    else:
        _, vecs = window_vectors(sample(spec, cfg.master_seed, r), window)
    full = vector_moments(vecs, cfg.q, block=cfg.block).mean(axis=1)
    off = None
    if cfg.g_slope:
        off = vector_moments(vecs, cfg.q, block=cfg.block, exclude_peak=True).mean(axis=1)
    return r, full, off


def _compute_cell(cfg, g, n, r_count, window, cache_dir, pool) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    jobs = [(cfg, g, n, r, window, cache_dir) for r in range(r_count)]
    full = np.empty((r_count, len(cfg.q)))
    off = np.empty((r_count, len(cfg.q))) if cfg.g_slope else None
    results = pool.map(_realization_job, jobs) if pool is not None else map(_realization_job, jobs)
    # results are placed by realization index, so worker count cannot change the reduction
    for r, f, o in results:
        full[r] = f
        if off is not None:
            off[r] = o
    return full, off


def run(cfg: ExperimentConfig, workers: int = 1, output: Optional[str] = None) -> RunResult:
    """Execute a configured experiment and write its artifact directory.

    Cells already present in ``<out>/cells`` from an identical configuration
    are loaded instead of recomputed. A cell that fails is recorded in the
    manifest and the run carries on.
    """
    out = Path(output or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    result = RunResult(directory=out)
    cells_meta = []
    records: List[MomentRecord] = []
    offpeak: List[MomentRecord] = []

    if cfg.is_solvable:
        for a in cfg.g:
            records.extend(solvable_records(a, cfg.q, cfg.sizes))
    else:
        cell_dir = out / "cells"
        cell_dir.mkdir(exist_ok=True)
        cache_dir = str(out / "eigen-cache") if cfg.cache_eigensystems else None
        window = _window(cfg)
        pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
        try:
            for g in cfg.g:
                for n in cfg.sizes:
                    r_count = cfg.realizations(n)
                    key = _cell_key(cfg, g, n, r_count, window)
                    path = cell_dir / f"{key}.npz"
                    meta = {"g": g, "N": n, "R": r_count, "cell": key}
                    try:
                        if path.exists():
                            with np.load(path) as data:
                                full = data["full"]
                                off = data["offpeak"] if cfg.g_slope else None
                            meta["status"] = "cached"
                        else:
                            t0 = time.time()
                            full, off = _compute_cell(cfg, g, n, r_count, window, cache_dir, pool)
                            tmp = path.with_suffix(".tmp.npz")
                            np.savez(tmp, full=full, offpeak=off if off is not None else np.empty(0))
                            tmp.replace(path)
                            meta["status"] = "computed"
                            meta["seconds"] = round(time.time() - t0, 3)
                        spec = cfg.spec(g, n)
                        records.extend(summarize(spec, cfg.q, full, window, cfg.block))
                        if off is not None:
                            offpeak.extend(summarize(spec, cfg.q, off, window, cfg.block, exclude_peak=True))
                    except Exception as exc:  # keep going; the manifest carries the failure
                        log.exception("cell g=%s N=%s failed", g, n)
                        meta["status"] = "failed"
                        meta["error"] = f"{type(exc).__name__}: {exc}"
                        result.failures.append(f"g={g} N={n}: {exc}")
                    cells_meta.append(meta)
        finally:
            if pool is not None:
                pool.shutdown()

    write_moments_csv(records, out / "moments.csv")
    notes: List[str] = []
    if not cfg.is_solvable and Kind(cfg.kind) is Kind.CRBRME and min(cfg.q) < -1:
        notes.append("CrBRME moments with q < -1 are plain means; no typical-value normalization is applied")
    estimates = []
    groups: Dict[float, List] = {}
    try:
        estimates = fit_all(records)
    except FitError as exc:
        notes.append(f"dimension fit skipped: {exc}")
    write_dimensions_csv(estimates, out / "dimensions.csv")
    for e in estimates:
        groups.setdefault(e.g, []).append(e)
    reports = []
    for g, ests in groups.items():
        try:
            reports.append(symmetry_residuals(ests))
        except FitError as exc:
            notes.append(f"symmetry skipped for g={g}: {exc}")
    write_symmetry_csv(reports, out / "symmetry.csv")
    curves = _theory_curves(cfg, notes)
    write_theory_csv(curves, cfg.q, out / "theory.csv", skip_invalid=True)

    slope_summary = None
    if offpeak:
        write_moments_csv(offpeak, out / "moments_offpeak.csv")
        slope_summary = _write_gslopes(offpeak, out / "gslopes.csv", notes)

    manifest = {
        "software": {"package": "critmf", "version": __version__, "python": platform.python_version(),
                     "numpy": np.__version__},
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
        "wall_seconds": round(time.time() - started, 3),
        "workers": workers,
        "cells": cells_meta,
        "failures": result.failures,
        "verdicts": {repr(r.g): {"verdict": r.verdict, "consistent_fraction": r.consistent_fraction} for r in reports},
        "notes": notes,
    }
    if slope_summary is not None:
        manifest["g_slope_vs_q"] = slope_summary
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return result


def _theory_curves(cfg: ExperimentConfig, notes: List[str]) -> List[TheoryCurve]:
    regimes = list(cfg.theory)
    if not regimes:
        if cfg.is_solvable:
            regimes = ["solvable"]
        elif Kind(cfg.kind) is not Kind.INTERMEDIATE:
            regimes = ["zero_order", "strong_first_order"]
    curves = []
    kind = "solvable" if cfg.is_solvable else cfg.kind
    for regime in regimes:
        for g in cfg.g:
            try:
                curves.append(theory_curve(regime, kind, g=g, beta=cfg.beta, mu=cfg.mu))
            except (TheoryDomainError, ValueError) as exc:
                notes.append(f"theory {regime} skipped for g={g}: {exc}")
    return curves


def _write_gslopes(records: Sequence[MomentRecord], path: Path, notes: List[str]) -> Optional[dict]:
    groups: Dict[Tuple[float, int], List[MomentRecord]] = {}
    for r in records:
        if r.q < 0.5:
            groups.setdefault((r.q, r.n), []).append(r)
    rows = []
    for (q, n), recs in sorted(groups.items()):
        try:
            fit = fit_g_slope(sorted(recs, key=lambda r: r.g))
        except FitError as exc:
            notes.append(f"g-slope skipped at q={q}, N={n}: {exc}")
            continue
        rows.append((recs[0].kind, q, n, fit))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("kind", "q", "N", "slope", "intercept", "stderr"))
        for kind, q, n, fit in rows:
            w.writerow([kind, repr(q), n, repr(fit.slope), repr(fit.intercept), repr(fit.stderr)])
    summary = {}
    for n in sorted({n for _, _, n, _ in rows}):
        pts = [(q, fit.slope) for _, q, nn, fit in rows if nn == n]
        if len(pts) >= 2:
            qs, slopes = zip(*pts)
            b, a = np.polyfit(qs, slopes, 1)
            summary[str(n)] = {"slope": float(b), "intercept": float(a)}
    return summary


def read_csv_rows(path) -> List[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


REPORT_COLUMNS = ("kind", "g", "q", "Dq", "Dq_err", "Delta_q", "residual", "residual_err")


def report(directory, output: Optional[str] = None) -> Path:
    """Merge ``dimensions.csv``, ``theory.csv`` and ``symmetry.csv`` into ``report.csv``.

    One row per fitted ``(kind, g, q)``; every theory regime present becomes
    a ``Dq_<regime>`` column.
    """
    d = Path(directory)
    dims = read_csv_rows(d / "dimensions.csv")
    theory = read_csv_rows(d / "theory.csv") if (d / "theory.csv").exists() else []
    sym = read_csv_rows(d / "symmetry.csv") if (d / "symmetry.csv").exists() else []

    def key(row):
        return (row["kind"], float(row["g"]), round(float(row["q"]), 9))

    regimes = sorted({t["regime"] for t in theory})
    th = {(t["regime"],) + key(t): t["Dq_theory"] for t in theory}
    sy = {key(s): s for s in sym}
    path = Path(output) if output else d / "report.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(REPORT_COLUMNS) + [f"Dq_{r}" for r in regimes])
        for row in dims:
            k = key(row)
            # the solvable theory is tabulated under kind "solvable", as are its moments
            s = sy.get(k, {})
            w.writerow([row["kind"], row["g"], row["q"], row["Dq"], row["Dq_err"], row["Delta_q"],
                        s.get("residual", ""), s.get("residual_err", "")]
                       + [th.get((r,) + k, "") for r in regimes])
    return path


def refit(moments_csv, output_dir) -> Path:
    """Fit dimensions and symmetry residuals from an existing ``moments.csv``."""
    from .moments import read_moments_csv

    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = read_moments_csv(moments_csv)
    estimates = fit_all(records)
    write_dimensions_csv(estimates, out / "dimensions.csv")
    reports = []
    by_g: Dict[Tuple[str, float], list] = {}
    for e in estimates:
        by_g.setdefault((e.kind, e.g), []).append(e)
    for ests in by_g.values():
        try:
            reports.append(symmetry_residuals(ests))
        except FitError:
            pass
    write_symmetry_csv(reports, out / "symmetry.csv")
    return out
