"""Sparse space-time models, l1 regime classification and field reconstruction."""

__version__ = "0.1.0"

from .config import Config
from .estimators import ConstrainedLasso, SparseRegimeClassifier, SpaceTimeModel
from .exceptions import (
    ConvergenceError,
    DataError,
    DegenerateInputError,
    DimensionMismatchError,
    FormatError,
    IndexOutOfRangeError,
    MalformedHeaderError,
    NonFiniteValueError,
    StsenseError,
)
from .harness import SweepResult, classification_sweep
from .lasso import SparseCoefficients, kkt_violation, solve_l1
from .library import (
    ClassificationResult,
    RegimeLibrary,
    build_library,
    classify,
    load_library,
    regime_scores,
    save_library,
)
from .reduction import (
    FourierTerm,
    RegimeModel,
    SvdTruncation,
    build_regime_model,
    evaluate_model,
    load_model,
    save_model,
    svd_truncate,
    temporal_spectrum,
)
from .sensing import (
    AmplitudeVector,
    Measurement,
    MeasurementSet,
    PhiMatrix,
    SensorPlan,
    build_phi,
    load_measurements,
    place_sensors,
    reconstruct_amplitudes,
    reconstruct_field,
    save_measurements,
)
from .snapshot import (
    SnapshotMatrix,
    SpatialProjection,
    TimeGrid,
    apply_projection,
    load_snapshots,
    save_snapshots,
)
from .synth import Component, RegimeSpec, default_preset, generate
