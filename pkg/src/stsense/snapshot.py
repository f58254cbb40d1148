"""Snapshot matrices, sensor projections and the binary snapshot file format.

A snapshot matrix stores one spatial location per row and one time sample per
column.  Full-state data and sensor subsets share the same type; the rows they
hold are recorded in ``space_ids`` (1-based indices into a grid of size
``n_full``).

File layout (all little-endian)::

    b"SPSN" | u32 version | u32 rows | u32 cols | u32 n_full | f64 t0 | f64 dt
    | rows * u32 space_ids | rows*cols f64 values (column-major)
    | [u32 length | UTF-8 JSON metadata]
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import (
    DataError,
    DimensionMismatchError,
    IndexOutOfRangeError,
    MalformedHeaderError,
    NonFiniteValueError,
)

MAGIC = b"SPSN"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIdd")


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Uniform sample times ``t0 + k*dt`` for ``k = 0..m-1``."""

    t0: float
    dt: float
    m: int

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise DataError(f"dt must be positive, got {self.dt}")
        if not np.isfinite(self.t0):
            raise DataError("t0 must be finite")
        if int(self.m) != self.m or self.m < 2:
            raise DataError(f"a time grid needs m >= 2 samples, got {self.m}")
        object.__setattr__(self, "m", int(self.m))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.m)

    @property
    def duration(self) -> float:
        """Total period ``m*dt`` covered by the grid (one FFT window)."""
        return self.m * self.dt


@dataclass(frozen=True)
class SnapshotMatrix:
    values: np.ndarray
    grid: TimeGrid
    space_ids: np.ndarray = None
    regime_label: str | None = None
    n_full: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1:
            raise DataError(f"snapshot values must be a 2-D array with >= 1 row, got shape {values.shape}")
        if values.shape[1] != self.grid.m:
            raise DataError(f"column count {values.shape[1]} != grid.m {self.grid.m}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("snapshot values contain NaN or inf")
        ids = np.arange(1, values.shape[0] + 1) if self.space_ids is None else np.asarray(self.space_ids)
        if ids.ndim != 1 or ids.shape[0] != values.shape[0]:
            raise DataError("space_ids length must equal the row count")
        ids = ids.astype(np.int64)
        n_full = int(ids.max()) if self.n_full is None else int(self.n_full)
        if np.any(np.diff(ids) <= 0):
            raise DataError("space_ids must be strictly increasing")
        for i in (ids[0], ids[-1]):
            if not 1 <= i <= n_full:
                raise IndexOutOfRangeError(int(i), n_full, "space id")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "space_ids", _frozen(ids, np.int64))
        object.__setattr__(self, "n_full", n_full)
        if self.regime_label is not None:
            object.__setattr__(self, "regime_label", str(self.regime_label))

    @property
    def shape(self):
        return self.values.shape

    def rows_for(self, ids) -> np.ndarray:
        """Row positions of the given space ids; raises if any is absent."""
        ids = np.asarray(ids, dtype=np.int64)
        pos = np.searchsorted(self.space_ids, ids)
        pos_c = np.minimum(pos, len(self.space_ids) - 1)
        bad = self.space_ids[pos_c] != ids
        if np.any(bad):
            raise IndexOutOfRangeError(int(ids[np.argmax(bad)]), self.n_full, "space id not present:")
        return pos


@dataclass(frozen=True)
class SpatialProjection:
    """Selection of ``k`` sensor locations out of ``n_full`` grid points."""

    n_full: int
    selected: tuple = field(default=())

    def __post_init__(self):
        sel = [int(i) for i in self.selected]
        if not sel:
            raise DataError("a projection needs at least one selected index")
        for i in sel:
            if not 1 <= i <= self.n_full:
                raise IndexOutOfRangeError(i, self.n_full, "projection index")
        if len(set(sel)) != len(sel):
            raise DataError("projection indices must be distinct")
        object.__setattr__(self, "selected", tuple(sorted(sel)))

    @property
    def k(self) -> int:
        return len(self.selected)

    def matrix(self) -> np.ndarray:
        """Dense ``k x n_full`` 0/1 selection matrix."""
        P = np.zeros((self.k, self.n_full))
        P[np.arange(self.k), np.asarray(self.selected) - 1] = 1.0
        return P


def apply_projection(proj: SpatialProjection, full: SnapshotMatrix) -> SnapshotMatrix:
    """Keep only the rows of ``full`` at the projection's sensor locations."""
    if proj.n_full != full.n_full:
        raise DataError(f"projection grid size {proj.n_full} != snapshot grid size {full.n_full}")
    rows = full.rows_for(proj.selected)
    return SnapshotMatrix(
        values=full.values[rows],
        grid=full.grid,
        space_ids=np.asarray(proj.selected),
        regime_label=full.regime_label,
        n_full=full.n_full,
    )


# --- binary encoding -------------------------------------------------------

def encode_array(values, space_ids, n_full, t0=0.0, dt=1.0, metadata=None) -> bytes:
    """Serialize a 2-D float array in the snapshot container format.

    This low-level form skips the time-grid checks so it can also carry
    matrices that are not time series (e.g. spatial mode bases).
    """
    values = np.asarray(values, dtype=float)
    rows, cols = values.shape
    parts = [
        _HEADER.pack(MAGIC, VERSION, rows, cols, int(n_full), float(t0), float(dt)),
        np.asarray(space_ids, dtype="<u4").tobytes(),
        np.asarray(values, dtype="<f8").tobytes(order="F"),
    ]
    if metadata:
        blob = json.dumps(metadata, sort_keys=True).encode("utf-8")
        parts += [struct.pack("<I", len(blob)), blob]
    return b"".join(parts)


def decode_array(buf: bytes):
    """Inverse of :func:`encode_array`.

    Returns ``(values, space_ids, n_full, t0, dt, metadata)``.
    """
    if len(buf) < _HEADER.size:
        raise MalformedHeaderError("file shorter than the snapshot header")
    magic, version, rows, cols, n_full, t0, dt = _HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise MalformedHeaderError(f"bad magic {magic!r}")
    if version != VERSION:
        raise MalformedHeaderError(f"unsupported version {version}")
    if rows < 1 or cols < 1:
        raise MalformedHeaderError(f"invalid dimensions {rows}x{cols}")
    off = _HEADER.size
    need = off + 4 * rows + 8 * rows * cols
    if len(buf) < need:
        raise DimensionMismatchError(f"payload holds {len(buf) - off} bytes, header implies {need - off}")
    ids = np.frombuffer(buf, dtype="<u4", count=rows, offset=off).astype(np.int64)
    off += 4 * rows
    values = np.frombuffer(buf, dtype="<f8", count=rows * cols, offset=off).reshape((rows, cols), order="F")
    off += 8 * rows * cols
    metadata = {}
    if off < len(buf):
        if len(buf) - off < 4:
            raise DimensionMismatchError("trailing bytes after the value block")
        (n,) = struct.unpack_from("<I", buf, off)
        if off + 4 + n != len(buf):
            raise DimensionMismatchError("trailing bytes do not form a metadata block")
        try:
            metadata = json.loads(buf[off + 4:].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DimensionMismatchError(f"unreadable metadata block: {exc}") from None
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError("file contains non-finite values")
    return np.array(values), ids, n_full, t0, dt, metadata


def save_snapshots(mat: SnapshotMatrix, path) -> None:
    meta = {"regime_label": mat.regime_label} if mat.regime_label is not None else None
    data = encode_array(mat.values, mat.space_ids, mat.n_full, mat.grid.t0, mat.grid.dt, meta)
    Path(path).write_bytes(data)


def load_snapshots(path) -> SnapshotMatrix:
    values, ids, n_full, t0, dt, meta = decode_array(Path(path).read_bytes())
    try:
        grid = TimeGrid(t0, dt, values.shape[1])
    except DataError as exc:
        raise MalformedHeaderError(str(exc)) from None
    return SnapshotMatrix(values, grid, ids, meta.get("regime_label"), n_full)
