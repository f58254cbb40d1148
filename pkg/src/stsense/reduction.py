"""Space-time sparse models learned from a single regime's snapshots.

Pipeline: truncated SVD of the snapshot matrix, real Fourier amplitudes of
every retained temporal mode, then selection of the largest combined
space-time coefficients ``alpha = sigma * (Fourier amplitude)``.  A fitted
``RegimeModel`` only keeps the referenced spatial modes and the frequencies,
which is all that is needed to evaluate it at arbitrary space-time points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataError, DegenerateInputError, IndexOutOfRangeError
from .snapshot import SnapshotMatrix, decode_array, encode_array

#: Singular values at or below this fraction of the largest are treated as zero.
RANK_RTOL = 1e-10
ENERGY_MODES = ("variance", "singular")


@dataclass(frozen=True)
class SvdTruncation:
    spatial_modes: np.ndarray  # (rows, d), orthonormal columns
    singular_values: np.ndarray  # (d,), nonincreasing, > 0
    temporal_modes: np.ndarray  # (d, m), orthonormal rows
    energy_captured: float
    all_singular_values: np.ndarray = None

    @property
    def rank(self) -> int:
        return len(self.singular_values)

    def reconstruct(self) -> np.ndarray:
        return (self.spatial_modes * self.singular_values) @ self.temporal_modes


@dataclass(frozen=True)
class FourierTerm:
    """One (spatial mode, frequency bin) pair of the space-time expansion."""

    mode_index: int  # 1-based SVD mode
    bin: int  # FFT bin q, omega = 2*pi*q / (m*dt)
    omega: float
    a_cos: float
    a_sin: float
    sigma: float = 1.0
    alpha_sq: float = None

    def __post_init__(self):
        if self.alpha_sq is None:
            object.__setattr__(self, "alpha_sq", (self.sigma * self.a_cos) ** 2 + (self.sigma * self.a_sin) ** 2)

    @property
    def alpha_cos(self) -> float:
        return self.sigma * self.a_cos

    @property
    def alpha_sin(self) -> float:
        return self.sigma * self.a_sin


@dataclass(frozen=True)
class RegimeModel:
    label: str
    terms: tuple
    spatial_modes: np.ndarray  # (n_space, len(mode_ids)) columns for mode_ids
    mode_ids: tuple  # 1-based SVD mode index held by each column of spatial_modes
    dt: float
    m: int
    t0: float = 0.0
    spatial_energy: float = 0.99
    spacetime_energy: float = 0.99
    energy: str = "variance"
    rank: int = None
    singular_values: tuple = ()
    energy_captured: float = None
    total_alpha_sq: float = None
    space_ids: tuple = None

    def __post_init__(self):
        modes = np.array(self.spatial_modes, dtype=float)
        if modes.ndim != 2 or modes.shape[1] != len(self.mode_ids):
            raise DataError("spatial_modes must hold one column per mode id")
        modes.setflags(write=False)
        object.__setattr__(self, "spatial_modes", modes)
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "mode_ids", tuple(int(i) for i in self.mode_ids))
        missing = {t.mode_index for t in self.terms} - set(self.mode_ids)
        if missing:
            raise DataError(f"terms reference unstored spatial modes {sorted(missing)}")
        if len({(t.mode_index, t.bin) for t in self.terms}) != len(self.terms):
            raise DataError("duplicate (mode, frequency) pairs in terms")
        if self.total_alpha_sq is None:
            object.__setattr__(self, "total_alpha_sq", float(sum(t.alpha_sq for t in self.terms)))
        if self.space_ids is None:
            object.__setattr__(self, "space_ids", tuple(range(1, modes.shape[0] + 1)))

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    @property
    def n_space(self) -> int:
        return self.spatial_modes.shape[0]

    @property
    def omegas(self) -> np.ndarray:
        return np.array([t.omega for t in self.terms])

    @property
    def alphas(self) -> np.ndarray:
        """``(n_terms, 2)`` array of (alpha_cos, alpha_sin)."""
        return np.array([[t.alpha_cos, t.alpha_sin] for t in self.terms]).reshape(-1, 2)

    @property
    def retained_fraction(self) -> float:
        return float(sum(t.alpha_sq for t in self.terms) / self.total_alpha_sq)

    def term_modes(self) -> np.ndarray:
        """``(n_space, n_terms)`` spatial mode vector of each term."""
        col = {i: c for c, i in enumerate(self.mode_ids)}
        return self.spatial_modes[:, [col[t.mode_index] for t in self.terms]]


def _energy_weights(s, energy):
    if energy not in ENERGY_MODES:
        raise DataError(f"energy must be one of {ENERGY_MODES}, got {energy!r}")
    return s**2 if energy == "variance" else s


def _fix_signs(W, Vh):
    # largest-magnitude entry of every spatial mode made positive
    idx = np.argmax(np.abs(W), axis=0)
    signs = np.sign(W[idx, np.arange(W.shape[1])])
    signs[signs == 0] = 1.0
    return W * signs, Vh * signs[:, None]


def svd_truncate(mat, energy_threshold=0.99, energy="variance") -> SvdTruncation:
    """Smallest-rank SVD truncation holding ``energy_threshold`` of the energy.

    ``mat`` may be a :class:`SnapshotMatrix` or a plain 2-D array.  With
    ``energy="variance"`` the energy of mode ``i`` is ``sigma_i**2``; with
    ``"singular"`` it is ``sigma_i``.
    """
    if not 0 < energy_threshold <= 1:
        raise DataError(f"energy threshold must lie in (0, 1], got {energy_threshold}")
    A = mat.values if isinstance(mat, SnapshotMatrix) else np.asarray(mat, dtype=float)
    if A.ndim != 2 or A.shape[1] < 2:
        raise DataError("need a 2-D matrix with at least two time samples")
    W, s, Vh = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise DegenerateInputError("snapshot matrix is identically zero")
    numerical_rank = int(np.sum(s > RANK_RTOL * s[0]))
    e = _energy_weights(s, energy)
    cum = np.cumsum(e) / e.sum()
    d = int(np.searchsorted(cum, energy_threshold - 1e-12) + 1)
    d = min(d, numerical_rank)
    W, Vh = _fix_signs(W[:, :d], Vh[:d])
    return SvdTruncation(
        spatial_modes=W,
        singular_values=s[:d].copy(),
        temporal_modes=Vh,
        energy_captured=float(cum[d - 1]),
        all_singular_values=s,
    )


def _real_amplitudes(u):
    """Cosine/sine amplitudes of every rfft bin of the real sequence ``u``."""
    m = u.shape[-1]
    X = np.fft.rfft(u)
    scale = np.full(X.shape[-1], 2.0 / m)
    scale[0] = 1.0 / m
    if m % 2 == 0:
        scale[-1] = 1.0 / m
    a_cos = scale * X.real
    a_sin = -scale * X.imag
    a_sin[0] = 0.0
    if m % 2 == 0:
        a_sin[-1] = 0.0
    return a_cos, a_sin


def bin_weights(m: int) -> np.ndarray:
    """Parseval weights: ``sum_k u_k**2 == sum_q w_q (a_cos_q**2 + a_sin_q**2)``."""
    w = np.full(m // 2 + 1, m / 2.0)
    w[0] = m
    if m % 2 == 0:
        w[-1] = m
    return w


def temporal_spectrum(trunc: SvdTruncation, mode_index: int, dt: float) -> list:
    """One :class:`FourierTerm` per FFT bin ``0..m//2`` of temporal mode ``mode_index``.

    Times are measured from the first training sample, so that
    ``u(t_k) = sum_q a_cos_q cos(omega_q t_k) + a_sin_q sin(omega_q t_k)``
    with ``t_k = k*dt``.
    """
    if not 1 <= mode_index <= trunc.rank:
        raise IndexOutOfRangeError(mode_index, trunc.rank, "mode index")
    u = trunc.temporal_modes[mode_index - 1]
    m = u.shape[0]
    sigma = float(trunc.singular_values[mode_index - 1])
    a_cos, a_sin = _real_amplitudes(u)
    omega = 2.0 * np.pi * np.arange(len(a_cos)) / (m * dt)
    return [
        FourierTerm(mode_index, q, float(omega[q]), float(a_cos[q]), float(a_sin[q]), sigma)
        for q in range(len(a_cos))
    ]


def select_terms(terms, spacetime_energy):
    """Shortest prefix (by descending alpha_sq) reaching the energy threshold.

    Ordering is a stable sort on (alpha_sq desc, mode asc, bin asc).  A
    threshold of 1 keeps every term with nonzero weight.
    """
    ordered = sorted(terms, key=lambda t: (-t.alpha_sq, t.mode_index, t.bin))
    a2 = np.array([t.alpha_sq for t in ordered])
    total = a2.sum()
    if spacetime_energy >= 1.0:
        n = int(np.count_nonzero(a2 > 0))
    else:
        n = int(np.searchsorted(np.cumsum(a2), spacetime_energy * total) + 1)
    return ordered[: max(n, 1)], float(total)


def build_regime_model(
    mat: SnapshotMatrix,
    spatial_energy=0.99,
    spacetime_energy=0.99,
    energy="variance",
    label=None,
) -> RegimeModel:
    label = label if label is not None else mat.regime_label
    if label is None:
        raise DataError("snapshot matrix has no regime label; pass label=")
    if not 0 < spacetime_energy <= 1:
        raise DataError(f"space-time energy threshold must lie in (0, 1], got {spacetime_energy}")
    trunc = svd_truncate(mat, spatial_energy, energy)
    dt = mat.grid.dt
    terms = [t for i in range(1, trunc.rank + 1) for t in temporal_spectrum(trunc, i, dt)]
    kept, total = select_terms(terms, spacetime_energy)
    mode_ids = sorted({t.mode_index for t in kept})
    return RegimeModel(
        label=str(label),
        terms=tuple(kept),
        spatial_modes=trunc.spatial_modes[:, [i - 1 for i in mode_ids]],
        mode_ids=tuple(mode_ids),
        dt=dt,
        m=mat.grid.m,
        t0=mat.grid.t0,
        spatial_energy=spatial_energy,
        spacetime_energy=spacetime_energy,
        energy=energy,
        rank=trunc.rank,
        singular_values=tuple(float(s) for s in trunc.singular_values),
        energy_captured=trunc.energy_captured,
        total_alpha_sq=total,
        space_ids=tuple(int(i) for i in mat.space_ids),
    )


def _check_space_ids(space_ids, n_space):
    ids = np.asarray(space_ids, dtype=np.int64).ravel()
    bad = (ids < 1) | (ids > n_space)
    if np.any(bad):
        raise IndexOutOfRangeError(int(ids[np.argmax(bad)]), n_space, "space id")
    return ids


def synthesize(model: RegimeModel, amplitudes, times, space_ids) -> np.ndarray:
    """Evaluate ``sum_j v_j[chi] (A_j cos(w_j tau) + B_j sin(w_j tau))`` on a grid.

    ``amplitudes`` is ``(n_terms, 2)``; returns ``(len(space_ids), len(times))``.
    """
    ids = _check_space_ids(space_ids, model.n_space)
    amplitudes = np.asarray(amplitudes, dtype=float).reshape(-1, 2)
    if amplitudes.shape[0] != model.n_terms:
        raise DataError(f"expected {model.n_terms} amplitude pairs, got {amplitudes.shape[0]}")
    tau = np.asarray(times, dtype=float).ravel() - model.t0
    phase = np.outer(model.omegas, tau)
    temporal = amplitudes[:, :1] * np.cos(phase) + amplitudes[:, 1:] * np.sin(phase)
    return model.term_modes()[ids - 1] @ temporal


def evaluate_model(model: RegimeModel, times, space_ids) -> np.ndarray:
    """Model field at every (space id, time) pair, rows = space ids."""
    return synthesize(model, model.alphas, times, space_ids)


# --- serialization ---------------------------------------------------------

def _term_record(t: FourierTerm) -> dict:
    return {
        "i": t.mode_index,
        "bin": t.bin,
        "omega": t.omega,
        "alpha_cos": t.alpha_cos,
        "alpha_sin": t.alpha_sin,
        "a_cos": t.a_cos,
        "a_sin": t.a_sin,
        "sigma": t.sigma,
        "alpha_sq": t.alpha_sq,
    }


def save_model(model: RegimeModel, path) -> Path:
    """Write ``<path>.json`` plus the spatial modes as ``<path>.modes.spsn``."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix == ".json" else path
    modes_path = stem.with_name(stem.name + ".modes.spsn")
    manifest = {
        "label": model.label,
        "dt": model.dt,
        "m": model.m,
        "t0": model.t0,
        "spatial_energy": model.spatial_energy,
        "spacetime_energy": model.spacetime_energy,
        "energy": model.energy,
        "rank": model.rank,
        "singular_values": list(model.singular_values),
        "energy_captured": model.energy_captured,
        "total_alpha_sq": model.total_alpha_sq,
        "mode_ids": list(model.mode_ids),
        "space_ids": list(model.space_ids),
        "modes_file": modes_path.name,
        "terms": [_term_record(t) for t in model.terms],
    }
    json_path = stem.with_name(stem.name + ".json")
    json_path.write_text(json.dumps(manifest, indent=2) + "\n")
    modes_path.write_bytes(
        encode_array(
            model.spatial_modes,
            model.space_ids,
            max(model.space_ids),
            metadata={"label": model.label, "mode_ids": list(model.mode_ids)},
        )
    )
    return json_path


def load_model(path) -> RegimeModel:
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_name(path.name + ".json")
    man = json.loads(path.read_text())
    modes, _, _, _, _, meta = decode_array((path.parent / man["modes_file"]).read_bytes())
    if meta.get("mode_ids") != man["mode_ids"]:
        raise DataError(f"{path}: spatial mode file does not match manifest mode ids")
    terms = [
        FourierTerm(r["i"], r["bin"], r["omega"], r["a_cos"], r["a_sin"], r["sigma"], r["alpha_sq"])
        for r in man["terms"]
    ]
    return RegimeModel(
        label=man["label"],
        terms=tuple(terms),
        spatial_modes=modes,
        mode_ids=tuple(man["mode_ids"]),
        dt=man["dt"],
        m=man["m"],
        t0=man["t0"],
        spatial_energy=man["spatial_energy"],
        spacetime_energy=man["spacetime_energy"],
        energy=man["energy"],
        rank=man["rank"],
        singular_values=tuple(man["singular_values"]),
        energy_captured=man["energy_captured"],
        total_alpha_sq=man["total_alpha_sq"],
        space_ids=tuple(man["space_ids"]),
    )
