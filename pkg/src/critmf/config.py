"""Experiment configuration: a YAML key-value file or the equivalent CLI flags."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import yaml

from .ensembles import EnsembleSpec, InvalidSpec, Kind, intermediate_denominator, round_up_congruent
from .moments import DEFAULT_BLOCK, default_q_grid
from .theory import REGIMES


class ConfigError(ValueError):
    pass


def parse_grid(value: Any, name: str) -> List[float]:
    """Explicit list, scalar, or a mapping ``{start, stop, step}`` /
    ``{start, stop, num, log}``; endpoints are inclusive."""
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        if not value:
            raise ConfigError(f"{name}: empty grid")
        return [float(v) for v in value]
    if isinstance(value, Mapping):
        try:
            start, stop = float(value["start"]), float(value["stop"])
        except KeyError as exc:
            raise ConfigError(f"{name}: grid mapping needs start and stop") from exc
        if "step" in value:
            step = float(value["step"])
            if step <= 0 or stop < start:
                raise ConfigError(f"{name}: need step > 0 and stop >= start")
            count = int(round((stop - start) / step)) + 1
            return [float(x) for x in np.round(start + step * np.arange(count), 12)]
        if "num" in value:
            num = int(value["num"])
            if num < 1:
                raise ConfigError(f"{name}: num must be >= 1")
            pts = np.geomspace(start, stop, num) if value.get("log") else np.linspace(start, stop, num)
            return [float(x) for x in pts]
        raise ConfigError(f"{name}: grid mapping needs step or num")
    raise ConfigError(f"{name}: cannot read a grid from {value!r}")


@dataclass
class ExperimentConfig:
    kind: str = "CM_r"
    g: List[float] = field(default_factory=lambda: [0.05])
    mu: Union[float, str, None] = None
    beta: Optional[int] = None
    sizes: List[int] = field(default_factory=lambda: [2 ** k for k in range(8, 13)])
    q: List[float] = field(default_factory=lambda: [float(x) for x in default_q_grid()])
    r0: Optional[int] = None
    n0: Optional[int] = 256
    realizations_per_n: Dict[int, int] = field(default_factory=dict)
    window_fraction: Optional[float] = None
    block: int = DEFAULT_BLOCK
    master_seed: int = 20111209
    output: str = "out"
    mode: str = "ensemble"
    g_slope: bool = False
    theory: List[str] = field(default_factory=list)
    cache_eigensystems: bool = False

    def __post_init__(self):
        self.realizations_per_n = {int(k): int(v) for k, v in self.realizations_per_n.items()}
        self.validate()

    @property
    def is_solvable(self) -> bool:
        return self.mode == "solvable"

    def validate(self) -> None:
        if self.mode not in ("ensemble", "solvable"):
            raise ConfigError(f"mode must be 'ensemble' or 'solvable', got {self.mode!r}")
        if not self.g:
            raise ConfigError("g grid is empty")
        if not self.q:
            raise ConfigError("q grid is empty")
        if len(set(self.sizes)) < 3:
            raise ConfigError(f"need >= 3 sizes for the 3-parameter fit, got {sorted(set(self.sizes))}")
        if self.block < 1:
            raise ConfigError("block must be >= 1")
        for regime in self.theory:
            if regime not in REGIMES:
                raise ConfigError(f"unknown theory regime {regime!r}")
        if self.is_solvable:
            for a in self.g:
                if float(a).is_integer():
                    raise ConfigError(f"solvable mode needs non-integer a, got {a}")
            return
        try:
            Kind(self.kind)
        except ValueError as exc:
            raise ConfigError(f"unknown ensemble kind {self.kind!r}") from exc
        if self.window_fraction is not None and not 0 < self.window_fraction <= 1:
            raise ConfigError("window_fraction must lie in (0, 1]")
        self.sizes = self.resolved_sizes()
        for g in self.g:
            for n in self.sizes:
                try:
                    self.spec(g, n)
                except InvalidSpec as exc:
                    raise ConfigError(str(exc)) from exc
        for n in self.sizes:
            if self.realizations(n) < 2:
                raise ConfigError(f"need >= 2 realizations at N={n} for a standard deviation")

    def resolved_sizes(self) -> List[int]:
        """Sizes, rounded up to ``1 (mod b)`` for the intermediate map with ``a = 1/b``."""
        sizes = sorted({int(n) for n in self.sizes})
        if self.mode == "ensemble" and Kind(self.kind) is Kind.INTERMEDIATE:
            bs = {intermediate_denominator(a) for a in self.g} - {None}
            if len(bs) > 1:
                raise ConfigError("intermediate-map runs with different denominators need separate configs")
            if bs:
                b = bs.pop()
                sizes = sorted({round_up_congruent(n, b) for n in sizes})
        return sizes

    def spec(self, g: float, n: int) -> EnsembleSpec:
        return EnsembleSpec(kind=Kind(self.kind), g=float(g), n=int(n), mu=self.mu, beta=self.beta)

    def realizations(self, n: int) -> int:
        """Per-size override, else ``R0 N0 / N`` (never below 2); ``n0 = None``
        keeps ``R0`` at every size."""
        if n in self.realizations_per_n:
            return int(self.realizations_per_n[n])
        r0 = self.r0
        if r0 is None:
            r0 = 1024 if (self.mode == "ensemble" and Kind(self.kind).is_unitary) else 2560
        if self.n0 is None:
            return int(r0)
        return max(2, int(round(r0 * self.n0 / n)))

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["realizations_per_n"] = {str(k): v for k, v in self.realizations_per_n.items()}
        return d

    def config_hash(self) -> str:
        d = self.to_dict()
        d.pop("output", None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        known = set(cls.__dataclass_fields__)
        kw: Dict[str, Any] = {}
        if "a" in data and "g" not in data:
            data["g"] = data.pop("a")
        for key in ("g", "q"):
            if key in data:
                kw[key] = parse_grid(data.pop(key), key)
        if "sizes" in data:
            kw["sizes"] = [int(x) for x in parse_grid(data.pop("sizes"), "sizes")]
        if "realizations" in data:
            r = data.pop("realizations")
            if isinstance(r, Mapping):
                if "r0" in r:
                    kw["r0"] = int(r["r0"])
                if "n0" in r:
                    kw["n0"] = int(r["n0"])
                kw["realizations_per_n"] = {int(k): int(v) for k, v in (r.get("per_n") or {}).items()}
            else:
                # a bare integer means the same count at every size
                kw["r0"], kw["n0"] = int(r), None
        if "seed" in data:
            data["master_seed"] = data.pop("seed")
        if isinstance(data.get("theory"), str):
            data["theory"] = [data["theory"]]
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw.update(data)
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def read_config_mapping(path) -> Dict[str, Any]:
    """Raw key-value content of a YAML experiment file."""
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ConfigError("config file must hold a key-value mapping")
    return dict(data)


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_mapping(read_config_mapping(path))
