"""Multi-regime libraries and l1 regime classification.

The library matrix stacks the measurement matrices of all regimes side by
side.  A measurement vector is decomposed over the whole library with an l1
penalty; each regime's score is the l1 mass of its block divided by the
square root of the block width, and the largest score wins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .lasso import SparseCoefficients, solve_l1
from .reduction import RegimeModel, load_model, save_model
from .sensing import MeasurementSet, build_phi

INDEX_FILE = "index.json"


@dataclass(frozen=True)
class RegimeLibrary:
    models: tuple
    column_spans: tuple  # ((start, stop), ...) half-open, in model order

    @classmethod
    def from_models(cls, models):
        models = tuple(models)
        if len(models) < 2:
            raise DataError("a library needs at least two regime models")
        n = models[0].n_space
        for m in models:
            if m.n_space != n:
                raise DataError(f"regime {m.label!r} has grid size {m.n_space}, expected {n}")
        labels = [m.label for m in models]
        if len(set(labels)) != len(labels):
            raise DataError(f"duplicate regime labels {labels}")
        spans, start = [], 0
        for m in models:
            spans.append((start, start + 2 * m.n_terms))
            start += 2 * m.n_terms
        return cls(models, tuple(spans))

    @property
    def labels(self) -> list:
        return [m.label for m in self.models]

    @property
    def n_space(self) -> int:
        return self.models[0].n_space

    @property
    def n_columns(self) -> int:
        return self.column_spans[-1][1]

    def index(self, label) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise DataError(f"unknown regime {label!r}; library holds {self.labels}") from None

    def __len__(self):
        return len(self.models)


@dataclass
class ClassificationResult:
    scores: np.ndarray
    winner: str
    winner_index: int
    coefficients: SparseCoefficients
    tied: bool = False

    def to_dict(self, labels) -> dict:
        return {
            "winner": self.winner,
            "scores": {lab: float(s) for lab, s in zip(labels, self.scores)},
            "residual_norm": self.coefficients.residual_norm,
            "diagnostics": {"tied": self.tied, **self.coefficients.diagnostics()},
        }


def build_library(models, meas: MeasurementSet):
    """Library of ``models`` and its matrix ``Psi`` for the measurement set."""
    lib = models if isinstance(models, RegimeLibrary) else RegimeLibrary.from_models(models)
    if meas.n_space != lib.n_space:
        raise DataError(f"measurement grid size {meas.n_space} != library grid size {lib.n_space}")
    psi = np.hstack([build_phi(m, meas).values for m in lib.models])
    return lib, psi


def regime_scores(library: RegimeLibrary, a) -> np.ndarray:
    """Block l1 norm of ``a`` divided by sqrt(block width), per regime."""
    a = np.abs(np.asarray(a, dtype=float))
    return np.array([a[s:e].sum() / np.sqrt(e - s) for s, e in library.column_spans])


def pick_winner(scores, rtol=1e-9):
    """Index of the best score (lowest index on ties) and a tie flag."""
    scores = np.asarray(scores)
    top = scores.max()
    close = np.abs(scores - top) <= rtol * abs(top) if top > 0 else scores == top
    return int(np.argmax(close)), bool(np.count_nonzero(close) > 1)


def classify(library: RegimeLibrary, psi, p, delta, **solver_opts) -> ClassificationResult:
    if psi.shape[1] != library.n_columns:
        raise DataError(f"Psi has {psi.shape[1]} columns, library expects {library.n_columns}")
    coef = solve_l1(psi, p, delta, **solver_opts)
    scores = regime_scores(library, coef.a)
    best, tied = pick_winner(scores)
    return ClassificationResult(scores, library.labels[best], best, coef, tied)


# --- persistence -----------------------------------------------------------

def _file_stem(i, label):
    safe = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in label)
    return f"regime_{i:02d}_{safe}"


def save_library(models, directory) -> Path:
    lib = models if isinstance(models, RegimeLibrary) else RegimeLibrary.from_models(models)
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, m in enumerate(lib.models):
        path = save_model(m, d / _file_stem(i, m.label))
        entries.append(
            {"label": m.label, "model": path.name, "n_terms": m.n_terms, "rank": m.rank, "t0": m.t0, "dt": m.dt, "m": m.m}
        )
    first = lib.models[0]
    index = {
        "regimes": entries,
        "n_space": lib.n_space,
        "column_spans": [list(s) for s in lib.column_spans],
        "spatial_energy": first.spatial_energy,
        "spacetime_energy": first.spacetime_energy,
        "energy": first.energy,
    }
    (d / INDEX_FILE).write_text(json.dumps(index, indent=2) + "\n")
    return d


def load_library(directory) -> RegimeLibrary:
    d = Path(directory)
    try:
        index = json.loads((d / INDEX_FILE).read_text())
    except FileNotFoundError:
        raise DataError(f"{d} is not a library directory (no {INDEX_FILE})") from None
    models = [load_model(d / e["model"]) for e in index["regimes"]]
    return RegimeLibrary.from_models(models)


def model_for(library: RegimeLibrary, label) -> RegimeModel:
    return library.models[library.index(label)]
