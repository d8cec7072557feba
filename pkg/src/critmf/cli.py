"""Command-line entry point: ``critmf {run,theory,solvable,fit,report}``.

Exit codes: 0 success, 1 some cells failed, 2 configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from .config import ConfigError, ExperimentConfig, parse_grid, read_config_mapping
from .scaling import FitError
from .theory import REGIMES, TheoryDomainError, theory_curve, write_theory_csv

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2


def grid_arg(text: str) -> Any:
    """``1,2,3`` or ``start:stop:step`` (inclusive)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        return {"start": start, "stop": stop, "step": step}
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def mu_arg(text: str):
    return text if text == "2pi/N" else float(text)


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML experiment file; flags override its keys")
    p.add_argument("--kind", help="CM_r, CM_h, CM_t, RS, IntermediateMap or CrBRME")
    p.add_argument("--g", type=grid_arg, help="coupling grid (a for the unitary kinds)")
    p.add_argument("--mu", type=mu_arg, help="phase for CM_h/CM_t, or 2pi/N")
    p.add_argument("--beta", type=int, choices=(1, 2))
    p.add_argument("--sizes", type=grid_arg, help="matrix sizes")
    p.add_argument("--q", type=grid_arg, help="moment orders")
    p.add_argument("--realizations", type=int, help="same realization count at every size")
    p.add_argument("--r0", type=int, help="realizations at the reference size n0")
    p.add_argument("--n0", type=int, help="reference size for R(N) = r0 n0 / N")
    p.add_argument("--window-fraction", type=float)
    p.add_argument("--block", type=int, help="coarse-graining block for q < 0")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--g-slope", action="store_true", default=None, help="also fit g-slopes of peak-excluded moments")
    p.add_argument("--theory", action="append", choices=REGIMES, help="theory regime to tabulate (repeatable)")
    p.add_argument("--cache-eigensystems", action="store_true", default=None)
    p.add_argument("--workers", type=int, default=1)


_FLAG_KEYS = {
    "kind": "kind", "g": "g", "mu": "mu", "beta": "beta", "sizes": "sizes", "q": "q", "block": "block",
    "seed": "seed", "out": "output", "window_fraction": "window_fraction", "g_slope": "g_slope",
    "theory": "theory", "cache_eigensystems": "cache_eigensystems",
}


def config_from_args(args: argparse.Namespace, base: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    data: Dict[str, Any] = {}
    if args.config:
        data.update(read_config_mapping(args.config))
    if base:
        data.update(base)
    for flag, key in _FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            if key == "seed":
                data.pop("master_seed", None)
            elif key == "g":
                data.pop("a", None)
            data[key] = value
    if args.realizations is not None:
        data["realizations"] = args.realizations
    elif args.r0 is not None or args.n0 is not None:
        budget = data.get("realizations")
        budget = dict(budget) if isinstance(budget, dict) else {}
        for key in ("r0", "n0"):
            if getattr(args, key) is not None:
                budget[key] = getattr(args, key)
        data["realizations"] = budget
    return ExperimentConfig.from_mapping(data)


def cmd_run(args, base=None) -> int:
    from .pipeline import run

    cfg = config_from_args(args, base)
    result = run(cfg, workers=max(1, args.workers))
    for failure in result.failures:
        print(f"cell failed: {failure}", file=sys.stderr)
    print(result.directory)
    return EXIT_PARTIAL if result.failures else EXIT_OK


def cmd_solvable(args) -> int:
    if args.kind is not None:
        raise ConfigError("solvable mode has no ensemble kind")
    return cmd_run(args, base={"mode": "solvable"})


def cmd_theory(args) -> int:
    qs = parse_grid(args.q, "q")
    curves = [theory_curve(args.regime, args.kind, g=g, s=args.s, rho_e=args.rho, beta=args.beta, mu=args.mu)
              for g in parse_grid(args.g, "g")]
    # tabulate every point first so a singular q aborts before anything is written
    for c in curves:
        c.tabulate(qs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_theory_csv(curves, qs, out, skip_invalid=False)
    print(out)
    return EXIT_OK


def cmd_fit(args) -> int:
    from .pipeline import refit

    print(refit(args.moments, args.out))
    return EXIT_OK


def cmd_report(args) -> int:
    from .pipeline import report

    print(report(args.dir, args.out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="critmf", description="Multifractal dimensions of critical random matrices.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="sample, diagonalize, fit and tabulate an ensemble experiment")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("solvable", help="exact moments of the solvable vectors (--g holds a)")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_solvable)

    p = sub.add_parser("theory", help="tabulate an analytic D_q curve")
    p.add_argument("--regime", required=True, choices=REGIMES)
    p.add_argument("--kind", required=True)
    p.add_argument("--g", type=grid_arg, default=[0.0])
    p.add_argument("--s", type=float)
    p.add_argument("--rho", type=float, help="density of states at the window centre")
    p.add_argument("--beta", type=int, choices=(1, 2))
    p.add_argument("--mu", type=mu_arg)
    p.add_argument("--q", type=grid_arg, default={"start": -3.0, "stop": 4.0, "step": 0.25})
    p.add_argument("--out", default="theory.csv")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("fit", help="refit dimensions and symmetry residuals from moments.csv")
    p.add_argument("moments")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="merge dimensions, theory and symmetry tables")
    p.add_argument("dir")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TheoryDomainError, FitError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
