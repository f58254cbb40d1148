"""Synthetic low-rank, periodic regime data on a ring of sensors.

Each regime is a sum of separable components
``amplitude * pattern(theta) * cos(omega t + phase)`` on ``k`` equally spaced
ring angles, where patterns are ring harmonics (``const``, ``cosH``,
``sinH``).  Phases of oscillating components are drawn from the regime seed;
static (``omega == 0``) components have zero phase.

The built-in preset stands in for five flow regimes of increasing
complexity: a steady one, two with a shedding frequency and its first
harmonic, and two with eight harmonics of a shedding frequency.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .snapshot import SnapshotMatrix, TimeGrid

_PATTERN = re.compile(r"^(const|cos(\d+)|sin(\d+))$")


def ring_pattern(pattern: str, theta) -> np.ndarray:
    mt = _PATTERN.match(pattern)
    if mt is None:
        raise DataError(f"unknown spatial pattern {pattern!r}; use const, cos<h> or sin<h>")
    theta = np.asarray(theta, dtype=float)
    if pattern == "const":
        return np.ones_like(theta)
    h = int(mt.group(2) or mt.group(3))
    return np.cos(h * theta) if mt.group(2) else np.sin(h * theta)


@dataclass(frozen=True)
class Component:
    pattern: str
    amplitude: float
    bin: float = 0.0  # frequency in FFT bins of the training grid

    def __post_init__(self):
        ring_pattern(self.pattern, 0.0)
        if not self.amplitude > 0:
            raise DataError("component amplitudes must be positive")
        if self.bin < 0:
            raise DataError("component frequencies must be nonnegative")


@dataclass(frozen=True)
class RegimeSpec:
    label: str
    components: tuple
    k: int = 64
    m: int = 400
    dt: float = 0.05
    t0: float = 0.0
    noise_std: float = 0.0
    seed: int = 0
    off_bin: bool = False

    def __post_init__(self):
        comps = tuple(c if isinstance(c, Component) else Component(**c) for c in self.components)
        if not comps:
            raise DataError("a regime needs at least one component")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "label", str(self.label))
        if self.k < 1:
            raise DataError("grid size k must be >= 1")
        TimeGrid(self.t0, self.dt, self.m)

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.t0, self.dt, self.m)

    @property
    def theta(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.k) / self.k

    def omegas(self) -> np.ndarray:
        bins = np.array([c.bin for c in self.components], dtype=float)
        if self.off_bin:
            bins = np.where(bins > 0, bins + 0.5, bins)
        return 2 * np.pi * bins / (self.m * self.dt)

    def phases(self) -> np.ndarray:
        rng = np.random.default_rng([self.seed, 0])
        ph = rng.uniform(0, 2 * np.pi, len(self.components))
        return np.where(np.array([c.bin for c in self.components]) > 0, ph, 0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["components"] = [asdict(c) for c in self.components]
        return d


def evaluate(spec: RegimeSpec, times, space_ids=None) -> np.ndarray:
    """Noise-free field at arbitrary times; rows follow ``space_ids`` (1-based)."""
    theta = spec.theta if space_ids is None else spec.theta[np.asarray(space_ids) - 1]
    tau = np.asarray(times, dtype=float).ravel() - spec.t0
    out = np.zeros((theta.size, tau.size))
    for c, w, ph in zip(spec.components, spec.omegas(), spec.phases()):
        out += c.amplitude * np.outer(ring_pattern(c.pattern, theta), np.cos(w * tau + ph))
    return out


def generate(spec: RegimeSpec) -> SnapshotMatrix:
    """Snapshot matrix of one regime on its training grid (deterministic in the seed)."""
    values = evaluate(spec, spec.grid.times)
    if spec.noise_std > 0:
        rng = np.random.default_rng([spec.seed, 1])
        values = values + spec.noise_std * rng.standard_normal(values.shape)
    return SnapshotMatrix(values, spec.grid, regime_label=spec.label, n_full=spec.k)


def _c(pattern, amplitude, bin=0.0):
    return Component(pattern, amplitude, bin)


def _regime(marker, osc, base_bin):
    """Shared mean field, a faint regime marker and ``osc`` = [(amplitude, ...)] harmonics."""
    comps = [_c("const", 0.10), _c("cos1", 0.14), _c("cos2", 0.20), _c(marker, 0.004)]
    comps += [_c(f"sin{h}", a, h * base_bin) for h, a in enumerate(osc, start=1)]
    return comps


def default_preset(k=64, m=400, dt=0.05, seed=2015) -> list:
    """Five regimes whose 0.99-energy SVD ranks are 1, 3, 3, 9, 9.

    All regimes share one mean field up to a faint marker pattern, so their
    mean-flow columns are nearly collinear.  The shedding frequencies of the
    two wake regimes ("800" and "1000") differ by 1e-4 relative, which makes
    their oscillating columns nearly collinear as well: noise-free samples
    are told apart easily, noisy ones only with a loose residual budget.
    """
    regimes = {
        "40": (_regime("cos9", [], 0), dt),
        "150": (_regime("cos10", [0.071, 0.052], 9), dt),
        "300": (_regime("cos11", [0.093, 0.061], 11), dt),
        "800": (
            _regime("cos12", [0.088, 0.076, 0.071, 0.062, 0.059, 0.056, 0.056, 0.054], 13),
            dt * 13 / 14 / (1 - 1e-4),
        ),
        "1000": (_regime("sin13", [0.091, 0.079, 0.074, 0.064, 0.061, 0.058, 0.056, 0.054], 14), dt),
    }
    return [
        RegimeSpec(label, tuple(comps), k=k, m=m, dt=step, seed=seed + i)
        for i, (label, (comps, step)) in enumerate(regimes.items())
    ]


def with_noise(specs, noise_std):
    return [replace(s, noise_std=noise_std) for s in specs]


def save_specs(specs, path) -> None:
    Path(path).write_text(json.dumps({"regimes": [s.to_dict() for s in specs]}, indent=2) + "\n")


def load_specs(path) -> list:
    data = json.loads(Path(path).read_text())
    items = data["regimes"] if isinstance(data, dict) else data
    try:
        return [RegimeSpec(**item) for item in items]
    except TypeError as exc:
        raise DataError(f"{path}: bad regime spec: {exc}") from None
