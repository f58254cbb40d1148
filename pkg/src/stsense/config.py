"""Run configuration shared by the command line tools."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .exceptions import DataError
from .harness import SAMPLES_MODES


@dataclass(frozen=True)
class Config:
    spatial_energy: float = 0.99
    spacetime_energy: float = 0.99
    energy: str = "variance"
    delta: float = 0.1  # residual budget for classify (fraction of ||p|| when relative_delta)
    deltas: tuple = (0.1, 0.7)  # eval grid
    relative_delta: bool = True
    sensor_count: int = 20
    time_sample_count: int = 100
    noise_stds: tuple = (0.0, 2**-7, 2**-5, 2**-4)
    trials: int = 100
    seed: int = 0
    preset_seed: int = 2015
    samples_mode: str = "times"
    phase_offset: bool = False
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        object.__setattr__(self, "noise_stds", tuple(float(s) for s in self.noise_stds))
        for name in ("spatial_energy", "spacetime_energy"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise DataError(f"{name} must lie in (0, 1], got {v}")
        for name in ("sensor_count", "time_sample_count", "trials", "jobs"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be >= 1")
        if self.energy not in ("variance", "singular"):
            raise DataError(f"energy must be 'variance' or 'singular', got {self.energy!r}")
        if self.samples_mode not in SAMPLES_MODES:
            raise DataError(f"samples_mode must be one of {SAMPLES_MODES}")
        if self.delta < 0 or any(d < 0 for d in self.deltas):
            raise DataError("deltas must be nonnegative")
        if any(s < 0 for s in self.noise_stds):
            raise DataError("noise standard deviations must be nonnegative")
        if self.seed < 0 or self.preset_seed < 0:
            raise DataError("seeds must be nonnegative")

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise DataError(f"unknown config keys {extra}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "Config":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise DataError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, **kw) -> "Config":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deltas"] = list(self.deltas)
        d["noise_stds"] = list(self.noise_stds)
        return d
