"""Pipeline configuration: one TOML file, every section optional."""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .baseline import BurstConfig
from .depkernel import KernelConfig
from .dqe import DqeConfig
from .embeddings import SemEqConfig
from .events import ApConfig, EventConfig


@dataclass(frozen=True)
class Paths:
    corpus: Path | None = None
    parses: Path | None = None
    embeddings: Path | None = None
    keywords: Path | None = None
    gsr: Path | None = None
    manual: Path | None = None
    output_dir: Path = Path("out")


@dataclass(frozen=True)
class EvalConfig:
    window: int = 1

    def __post_init__(self):
        if self.window < 0:
            raise ValueError("window must be non-negative")


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths = field(default_factory=Paths)
    dqe: DqeConfig = field(default_factory=DqeConfig)
    ap: ApConfig = field(default_factory=ApConfig)
    events: EventConfig = field(default_factory=EventConfig)
    burst: BurstConfig = field(default_factory=BurstConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed_category: str = "all"
    jobs: int = 1
    # no stage draws random numbers; the flag only documents that runs are reproducible
    randomless: bool = True

    def to_json(self) -> dict:
        def conv(x):
            if isinstance(x, Path):
                return str(x)
            if dataclasses.is_dataclass(x):
                return {f.name: conv(getattr(x, f.name)) for f in dataclasses.fields(x)}
            return x
        return conv(self)


def _build(cls, section: dict[str, Any], where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ValueError(f"[{where}] unknown key(s): {', '.join(unknown)}")
    try:
        return cls(**section)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"[{where}] {exc}") from None


def from_dict(data: dict[str, Any], base: Path | None = None) -> PipelineConfig:
    """Build a config from parsed TOML; relative paths resolve against ``base``."""
    data = dict(data)
    top = {k: data.pop(k) for k in ("seed_category", "jobs", "randomless") if k in data}

    raw_paths = dict(data.pop("paths", {}))
    for k, v in raw_paths.items():
        p = Path(v)
        raw_paths[k] = (base / p) if base is not None and not p.is_absolute() else p
    paths = _build(Paths, raw_paths, "paths")

    kernel = _build(KernelConfig, {**data.pop("kernel", {}),
                                   "sem_eq": _build(SemEqConfig, data.pop("semeq", {}), "semeq")}, "kernel")
    dqe = _build(DqeConfig, {**data.pop("dqe", {}), "kernel": kernel}, "dqe")
    ap = _build(ApConfig, data.pop("ap", {}), "ap")
    events = _build(EventConfig, data.pop("events", {}), "events")
    burst = _build(BurstConfig, data.pop("burst", {}), "burst")
    ev = _build(EvalConfig, data.pop("eval", {}), "eval")
    if data:
        raise ValueError(f"unknown config section(s): {', '.join(sorted(data))}")
    return PipelineConfig(paths, dqe, ap, events, burst, ev, **top)


def load_config(path: Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path, "rb") as fh:
        try:
            data = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ValueError(f"{path}: {exc}") from None
    return from_dict(data, Path(path).parent)
