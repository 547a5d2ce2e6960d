"""Run configuration shared by the command-line tools.

One JSON object with a global seed and a section per module.  Every key
is optional; unknown keys anywhere are an error so a typo can't silently
fall back to a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .discriminator import DEFAULT_GRID, GridConfig
from .filters import DEFAULT_WEIGHTS, FilterWeights
from .optimize import DEFAULT_CONFIG, OptimizerConfig
from .tracker import TrackerConfig

__all__ = ["RunConfig", "ClassifierConfig", "load_config"]


@dataclass(frozen=True)
class ClassifierConfig:
    reg: float = 1e-3
    iterations: int = 1000
    min_points: int = 10

    def __post_init__(self):
        if not self.reg > 0 or self.iterations < 2 or self.min_points < 1:
            raise ValueError("classifier needs reg > 0, iterations >= 2, min_points >= 1")

    def to_dict(self) -> dict:
        return {"reg": self.reg, "iterations": self.iterations, "min_points": self.min_points}

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        unknown = set(d) - {"reg", "iterations", "min_points"}
        if unknown:
            raise ValueError(f"unknown classifier keys: {sorted(unknown)}")
        return cls(**d)


_SECTIONS = {
    "filter": FilterWeights,
    "optimizer": OptimizerConfig,
    "tracker": TrackerConfig,
    "grid": GridConfig,
    "classifier": ClassifierConfig,
}


@dataclass(frozen=True)
class RunConfig:
    """Effective settings of a run.

    ``seed`` drives every random choice the tools make (scene noise,
    synthetic training sets, benchmark clusters).
    """

    seed: int = 0
    filter: FilterWeights = DEFAULT_WEIGHTS
    optimizer: OptimizerConfig = DEFAULT_CONFIG
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    grid: GridConfig = DEFAULT_GRID
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)

    def __post_init__(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ValueError("seed must be a non-negative integer")

    def to_dict(self) -> dict:
        d = {"seed": self.seed}
        for name in _SECTIONS:
            d[name] = getattr(self, name).to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ValueError("config must be a JSON object")
        unknown = set(d) - set(_SECTIONS) - {"seed"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {}
        if "seed" in d:
            kw["seed"] = d["seed"]
        for name, typ in _SECTIONS.items():
            if name in d:
                if not isinstance(d[name], dict):
                    raise ValueError(f"config section {name!r} must be an object")
                kw[name] = typ.from_dict(d[name])
        return cls(**kw)

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        d = self.to_dict()
        d["seed"] = seed
        return RunConfig.from_dict(d)


def load_config(path) -> RunConfig:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: {e.msg} at line {e.lineno}") from None
    return RunConfig.from_dict(d)
