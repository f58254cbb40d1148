"""scikit-learn style wrappers around the functional API.

``SpaceTimeModel`` learns one regime model from a snapshot matrix,
``SparseRegimeClassifier`` learns a library from several and labels
measurement sets, and ``ConstrainedLasso`` exposes the l1 solver on plain
``(X, y)`` data.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .lasso import solve_l1
from .library import RegimeLibrary, build_library, classify, model_for
from .reduction import build_regime_model, evaluate_model
from .sensing import MeasurementSet, build_phi, reconstruct_amplitudes, reconstruct_field
from .snapshot import SnapshotMatrix, TimeGrid


def _as_snapshots(X, dt, t0, label=None) -> SnapshotMatrix:
    if isinstance(X, SnapshotMatrix):
        return X
    values = check_array(X, ensure_min_samples=1, ensure_min_features=2)
    return SnapshotMatrix(values, TimeGrid(t0, dt, values.shape[1]), regime_label=label)


def _as_measurements(meas, n_space) -> MeasurementSet:
    if isinstance(meas, MeasurementSet):
        return meas
    arr = check_array(meas)
    if arr.shape[1] != 3:
        raise ValueError(f"measurement arrays need columns (tau, chi, value), got {arr.shape[1]} columns")
    return MeasurementSet(arr[:, 0], arr[:, 1].astype(np.int64), arr[:, 2], n_space)


class SpaceTimeModel(BaseEstimator):
    """Sparse space-time model of a single regime.

    ``fit`` takes a :class:`SnapshotMatrix` or a (space x time) array sampled
    every ``dt`` from ``t0``.
    """

    def __init__(self, spatial_energy=0.99, spacetime_energy=0.99, energy="variance", dt=1.0, t0=0.0, label=None):
        self.spatial_energy = spatial_energy
        self.spacetime_energy = spacetime_energy
        self.energy = energy
        self.dt = dt
        self.t0 = t0
        self.label = label

    def fit(self, X, y=None):
        mat = _as_snapshots(X, self.dt, self.t0, self.label)
        self.model_ = build_regime_model(mat, self.spatial_energy, self.spacetime_energy, self.energy, self.label)
        self.rank_ = self.model_.rank
        self.n_terms_ = self.model_.n_terms
        return self

    def predict(self, times, space_ids=None):
        """Model field at ``times``; rows follow 1-based ``space_ids`` (default: all rows)."""
        check_is_fitted(self, "model_")
        ids = np.arange(1, self.model_.n_space + 1) if space_ids is None else space_ids
        return evaluate_model(self.model_, times, ids)

    def reconstruct(self, meas, times, space_ids=None):
        """Least-squares field from point measurements on this model's basis."""
        check_is_fitted(self, "model_")
        meas = _as_measurements(meas, self.model_.n_space)
        b = reconstruct_amplitudes(build_phi(self.model_, meas), meas)
        ids = np.arange(1, self.model_.n_space + 1) if space_ids is None else space_ids
        return reconstruct_field(self.model_, b, times, ids)


class SparseRegimeClassifier(ClassifierMixin, BaseEstimator):
    """l1 regime classifier over a library of regime models.

    ``fit`` takes a list of snapshot matrices (or arrays, labelled by ``y``).
    With ``relative_delta`` the residual budget is ``delta * ||p||``.
    """

    def __init__(
        self,
        delta=0.1,
        relative_delta=True,
        spatial_energy=0.99,
        spacetime_energy=0.99,
        energy="variance",
        dt=1.0,
        t0=0.0,
    ):
        self.delta = delta
        self.relative_delta = relative_delta
        self.spatial_energy = spatial_energy
        self.spacetime_energy = spacetime_energy
        self.energy = energy
        self.dt = dt
        self.t0 = t0

    def fit(self, X, y=None):
        X = list(X)
        labels = [None] * len(X) if y is None else [str(v) for v in y]
        if len(labels) != len(X):
            raise ValueError(f"{len(X)} snapshot sets but {len(labels)} labels")
        models = []
        for i, (x, lab) in enumerate(zip(X, labels)):
            mat = _as_snapshots(x, self.dt, self.t0, lab)
            label = lab or mat.regime_label or str(i)
            models.append(
                build_regime_model(mat, self.spatial_energy, self.spacetime_energy, self.energy, label)
            )
        self._set_library(RegimeLibrary.from_models(models))
        return self

    @classmethod
    def from_library(cls, library: RegimeLibrary, **params):
        est = cls(**params)
        est._set_library(library)
        return est

    def _set_library(self, library):
        self.library_ = library
        self.classes_ = np.array(library.labels)

    def _budget(self, p):
        return self.delta * float(np.linalg.norm(p)) if self.relative_delta else self.delta

    def classify(self, meas):
        """Full :class:`ClassificationResult` for one measurement set."""
        check_is_fitted(self, "library_")
        meas = _as_measurements(meas, self.library_.n_space)
        _, psi = build_library(self.library_, meas)
        return classify(self.library_, psi, meas.value, self._budget(meas.value))

    def _batch(self, X):
        single = isinstance(X, MeasurementSet) or (isinstance(X, np.ndarray) and X.ndim == 2)
        return [X] if single else list(X)

    def decision_function(self, X):
        """Regime scores, one row per measurement set."""
        return np.vstack([self.classify(m).scores for m in self._batch(X)])

    def predict(self, X):
        return np.array([self.classify(m).winner for m in self._batch(X)])

    def score(self, X, y, sample_weight=None):
        return super().score(self._batch(X), np.asarray(y, dtype=str), sample_weight)

    def reconstruct(self, meas, times, space_ids=None, regime="auto"):
        """Field reconstructed on the chosen (or classified) regime's basis."""
        check_is_fitted(self, "library_")
        meas = _as_measurements(meas, self.library_.n_space)
        label = self.classify(meas).winner if regime == "auto" else regime
        model = model_for(self.library_, label)
        b = reconstruct_amplitudes(build_phi(model, meas), meas)
        ids = np.arange(1, model.n_space + 1) if space_ids is None else space_ids
        return reconstruct_field(model, b, times, ids)


class ConstrainedLasso(RegressorMixin, BaseEstimator):
    """``min ||w||_1  s.t.  ||y - X w||_2 <= delta`` (no intercept)."""

    def __init__(self, delta=0.1, relative_delta=False, max_iter=10_000, bisection_steps=30):
        self.delta = delta
        self.relative_delta = relative_delta
        self.max_iter = max_iter
        self.bisection_steps = bisection_steps

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        budget = self.delta * float(np.linalg.norm(y)) if self.relative_delta else self.delta
        res = solve_l1(X, y, budget, self.max_iter, self.bisection_steps)
        self.coef_ = res.a
        self.lambda_ = res.lam
        self.residual_norm_ = res.residual_norm
        self.n_iter_ = res.iterations
        self.mode_ = res.mode
        self.infeasible_ = res.infeasible
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but {type(self).__name__} is expecting "
                f"{self.n_features_in_} features as input"
            )
        return X @ self.coef_
