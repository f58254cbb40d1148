"""Point measurements, the measurement matrix and least-squares reconstruction.

Measurements are scalar samples ``p_i`` taken at arbitrary times ``tau_i`` and
sensed-grid locations ``chi_i`` (1-based).  For a regime model with terms
``(v_j, omega_j)`` the measurement matrix has two columns per term::

    Phi[i, 2j]   = v_j[chi_i] * cos(omega_j * tau_i)
    Phi[i, 2j+1] = v_j[chi_i] * sin(omega_j * tau_i)

so that ``p = Phi @ b`` with ``b = (A_1, B_1, A_2, B_2, ...)``.  An unknown
global time shift of the data is absorbed into the (A, B) pairs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .exceptions import DataError, IndexOutOfRangeError, NonFiniteValueError
from .reduction import RegimeModel, _check_space_ids, synthesize

#: Relative singular-value cutoff of the pseudo-inverse.
PINV_RCOND = 1e-10


class Measurement(NamedTuple):
    tau: float
    chi: int
    value: float


@dataclass(frozen=True)
class MeasurementSet:
    tau: np.ndarray
    chi: np.ndarray
    value: np.ndarray
    n_space: int

    def __post_init__(self):
        tau = np.array(self.tau, dtype=float).ravel()
        chi = np.array(self.chi, dtype=np.int64).ravel()
        value = np.array(self.value, dtype=float).ravel()
        if not (tau.shape == chi.shape == value.shape):
            raise DataError("tau, chi and value must have equal length")
        if tau.size == 0:
            raise DataError("a measurement set needs at least one measurement")
        if not (np.all(np.isfinite(value)) and np.all(np.isfinite(tau))):
            raise NonFiniteValueError("measurement times and values must be finite")
        _check_space_ids(chi, self.n_space)
        for a in (tau, chi, value):
            a.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "value", value)

    @classmethod
    def from_items(cls, items, n_space):
        items = list(items)
        if not items:
            raise DataError("a measurement set needs at least one measurement")
        tau, chi, value = zip(*items)
        return cls(tau, chi, value, n_space)

    @property
    def items(self) -> list:
        return [Measurement(float(t), int(c), float(v)) for t, c, v in zip(self.tau, self.chi, self.value)]

    def __len__(self):
        return self.tau.size

    def with_values(self, value) -> "MeasurementSet":
        return MeasurementSet(self.tau, self.chi, value, self.n_space)

    def subset(self, rows) -> "MeasurementSet":
        return MeasurementSet(self.tau[rows], self.chi[rows], self.value[rows], self.n_space)


@dataclass(frozen=True)
class PhiMatrix:
    values: np.ndarray
    label: str

    @property
    def n_terms(self) -> int:
        return self.values.shape[1] // 2

    @staticmethod
    def column(term: int, kind: str) -> int:
        """0-based column of ``term`` (0-based) for ``kind`` in {'cos', 'sin'}."""
        return 2 * term + (kind == "sin")


@dataclass(frozen=True)
class AmplitudeVector:
    A: np.ndarray
    B: np.ndarray

    @classmethod
    def from_interleaved(cls, b):
        b = np.asarray(b, dtype=float).reshape(-1, 2)
        return cls(b[:, 0].copy(), b[:, 1].copy())

    @classmethod
    def from_model(cls, model: RegimeModel):
        return cls.from_interleaved(model.alphas)

    def as_vector(self) -> np.ndarray:
        return np.column_stack([self.A, self.B]).ravel()

    def as_pairs(self) -> np.ndarray:
        return np.column_stack([self.A, self.B])

    def __len__(self):
        return len(self.A)


@dataclass(frozen=True)
class SensorPlan:
    indices: tuple
    source: str = ""

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise DataError("sensor indices must be distinct")
        object.__setattr__(self, "indices", idx)


def local_extrema(v) -> list:
    """Indices (0-based) of strict local extrema of a sampled curve.

    An extremum is a sign change of the first difference; along a plateau
    the leftmost sample is reported.  Endpoints are never interior extrema.
    """
    d = np.sign(np.diff(np.asarray(v, dtype=float)))
    out = []
    prev_sign, prev_j = 0, -1
    for j, s in enumerate(d):
        if s == 0:
            continue
        if prev_sign and s != prev_sign:
            out.append(prev_j + 1)
        prev_sign, prev_j = s, j
    return out


def place_sensors(models, count: int) -> SensorPlan:
    """Sensor locations at the extrema of the models' dominant spatial modes.

    Candidates are the local extrema plus the global max/min of every stored
    spatial mode.  Each candidate is ranked by ``|v[idx]|`` times the mode's
    total alpha_sq in its model; the first ``count`` distinct indices win.
    Uniformly spaced indices fill up if the extrema run out.
    """
    if isinstance(models, RegimeModel):
        models = [models]
    models = list(models)
    n = models[0].n_space
    if any(m.n_space != n for m in models):
        raise DataError("all models must share one spatial grid")
    if not 1 <= count <= n:
        raise DataError(f"sensor count must lie in [1, {n}], got {count}")
    cands = []
    for mi, model in enumerate(models):
        weight = {}
        for t in model.terms:
            weight[t.mode_index] = weight.get(t.mode_index, 0.0) + t.alpha_sq
        for c, mode in enumerate(model.mode_ids):
            v = model.spatial_modes[:, c]
            idx = set(local_extrema(v)) | {int(np.argmax(v)), int(np.argmin(v))}
            for i in idx:
                cands.append((-abs(v[i]) * weight.get(mode, 0.0), mi, mode, i))
    cands.sort()
    chosen = []
    for *_, i in cands:
        if i not in chosen:
            chosen.append(i)
        if len(chosen) == count:
            break
    source = "extrema"
    if len(chosen) < count:
        source = "extrema+uniform"
        fill = [int(round(x)) for x in np.linspace(0, n - 1, count)] + list(range(n))
        for i in fill:
            if i not in chosen:
                chosen.append(i)
            if len(chosen) == count:
                break
    return SensorPlan(tuple(i + 1 for i in chosen), source)


def build_phi(model: RegimeModel, meas: MeasurementSet) -> PhiMatrix:
    if meas.n_space != model.n_space:
        raise DataError(f"measurement grid size {meas.n_space} != model grid size {model.n_space}")
    if np.any(meas.chi > model.n_space):
        raise IndexOutOfRangeError(int(meas.chi.max()), model.n_space, "measurement location")
    v = model.term_modes()[meas.chi - 1]  # (N, n_terms)
    phase = np.outer(meas.tau - model.t0, model.omegas)
    phi = np.empty((len(meas), 2 * model.n_terms))
    phi[:, 0::2] = v * np.cos(phase)
    phi[:, 1::2] = v * np.sin(phase)
    return PhiMatrix(phi, model.label)


def reconstruct_amplitudes(phi: PhiMatrix, meas: MeasurementSet) -> AmplitudeVector:
    """Minimum-norm least-squares amplitudes (pseudo-inverse solution)."""
    P = phi.values if isinstance(phi, PhiMatrix) else np.asarray(phi, dtype=float)
    if P.shape[0] != len(meas):
        raise DataError(f"Phi has {P.shape[0]} rows but there are {len(meas)} measurements")
    b, *_ = np.linalg.lstsq(P, meas.value, rcond=PINV_RCOND)
    return AmplitudeVector.from_interleaved(b)


def reconstruct_field(model: RegimeModel, b: AmplitudeVector, times, space_ids) -> np.ndarray:
    if len(b) != model.n_terms:
        raise DataError(f"amplitude vector has {len(b)} pairs, model has {model.n_terms} terms")
    return synthesize(model, b.as_pairs(), times, space_ids)


# --- CSV -------------------------------------------------------------------

def save_measurements(meas: MeasurementSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "chi", "value"])
        for t, c, v in zip(meas.tau, meas.chi, meas.value):
            w.writerow([repr(float(t)), int(c), repr(float(v))])


def load_measurements(path, n_space: int) -> MeasurementSet:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["tau", "chi", "value"]:
        raise DataError(f"{path}: expected header 'tau,chi,value'")
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataError(f"{path}: no measurements")
    try:
        items = [(float(t), int(c), float(v)) for t, c, v in body]
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    return MeasurementSet.from_items(items, n_space)
