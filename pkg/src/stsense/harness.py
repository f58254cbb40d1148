"""Seeded Monte Carlo evaluation of classification and reconstruction.

Every trial draws its own RNG stream from ``(seed, trial)``, so a sweep gives
the same numbers regardless of scheduling, and every (noise, delta) cell sees
the same sample times and the same noise direction (common random numbers).
Trial ``t`` draws its data from regime ``t mod M``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lasso import kkt_violation
from .library import RegimeLibrary, build_library, classify
from .reduction import build_regime_model
from .sensing import MeasurementSet, place_sensors
from .synth import RegimeSpec, evaluate, generate

log = logging.getLogger(__name__)

SAMPLES_MODES = ("times", "scalars")


def train_models(specs, spatial_energy=0.99, spacetime_energy=0.99, energy="variance"):
    return [build_regime_model(generate(s), spatial_energy, spacetime_energy, energy) for s in specs]


def sample_measurements(
    spec: RegimeSpec,
    sensors,
    n_samples: int,
    rng: np.random.Generator,
    samples_mode="times",
    phase_offset=False,
) -> MeasurementSet:
    """Noise-free samples of a regime at random training-grid times.

    ``samples_mode="times"`` reads every sensor at ``n_samples`` distinct
    times; ``"scalars"`` takes ``n_samples`` single readings at random
    (sensor, time) pairs.  With ``phase_offset`` the underlying signal is
    shifted by a random fraction of the training window, unknown to the
    measurement clock.
    """
    sensors = np.asarray(sensors, dtype=np.int64)
    n_samples = min(n_samples, spec.m)
    if samples_mode == "times":
        k = np.sort(rng.choice(spec.m, n_samples, replace=False))
        chi = np.tile(sensors, k.size)
        k = np.repeat(k, sensors.size)
    elif samples_mode == "scalars":
        k = rng.integers(0, spec.m, n_samples)
        chi = sensors[rng.integers(0, sensors.size, n_samples)]
    else:
        raise ValueError(f"samples_mode must be one of {SAMPLES_MODES}")
    tau = spec.t0 + k * spec.dt
    shift = rng.uniform(0, spec.m * spec.dt) if phase_offset else 0.0
    # evaluate each distinct sensor row once over all times
    vals = np.empty(tau.size)
    for s in np.unique(chi):
        sel = chi == s
        vals[sel] = evaluate(spec, tau[sel] + shift, [s])[0]
    return MeasurementSet(tau, chi, vals, spec.k)


@dataclass
class SweepResult:
    noise_stds: list
    deltas: list
    rates: np.ndarray  # (len(deltas), len(noise_stds))
    trials: int
    seed: int
    sensors: tuple
    labels: list
    kkt_max_off: float = -np.inf
    kkt_max_on: float = 0.0
    kkt_sign_ok: bool = True
    n_solves: int = 0
    confusion: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "noise_stds": list(self.noise_stds),
            "deltas": list(self.deltas),
            "rates": self.rates.tolist(),
            "trials": self.trials,
            "seed": self.seed,
            "sensors": list(self.sensors),
            "labels": list(self.labels),
            "kkt": {
                "max_off": self.kkt_max_off,
                "max_on": self.kkt_max_on,
                "sign_ok": self.kkt_sign_ok,
                "solves": self.n_solves,
            },
        }


def classification_sweep(
    specs,
    noise_stds=(0.0, 2**-7, 2**-5, 2**-4),
    deltas=(0.1, 0.7),
    trials=100,
    seed=0,
    sensor_count=20,
    time_samples=100,
    samples_mode="times",
    spatial_energy=0.99,
    spacetime_energy=0.99,
    energy="variance",
    relative_delta=True,
    phase_offset=False,
    sensors=None,
    models=None,
    check_kkt=True,
    jobs=1,
) -> SweepResult:
    """Success rate of regime classification over a noise x delta grid.

    ``relative_delta`` scales each residual budget by the norm of the measured
    vector, so ``delta`` is a fraction of the signal.  ``jobs > 1`` runs trials
    on a thread pool; results do not depend on it.
    """
    specs = list(specs)
    models = models if models is not None else train_models(specs, spatial_energy, spacetime_energy, energy)
    library = RegimeLibrary.from_models(models)
    if sensors is None:
        sensors = place_sensors(models, sensor_count).indices
    n = len(specs)

    def trial(t):
        rng = np.random.default_rng([seed, t])
        truth = t % n
        meas = sample_measurements(specs[truth], sensors, time_samples, rng, samples_mode, phase_offset)
        z = rng.standard_normal(len(meas))
        _, psi = build_library(library, meas)
        out = []
        for j, sigma in enumerate(noise_stds):
            p = meas.value + sigma * z
            pn = np.linalg.norm(p)
            for i, delta in enumerate(deltas):
                res = classify(library, psi, p, delta * pn if relative_delta else delta)
                kv = kkt_violation(psi, p, res.coefficients) if check_kkt else None
                out.append((i, j, res.winner_index, kv))
        log.debug("trial %d done", t)
        return truth, out

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            outcomes = list(pool.map(trial, range(trials)))
    else:
        outcomes = [trial(t) for t in range(trials)]

    rates = np.zeros((len(deltas), len(noise_stds)))
    res = SweepResult(list(noise_stds), list(deltas), rates, trials, seed, tuple(sensors), library.labels)
    for truth, out in outcomes:
        for i, j, winner, kv in out:
            rates[i, j] += winner == truth
            res.confusion.setdefault((i, j), np.zeros((n, n), int))[truth, winner] += 1
            if kv is not None:
                res.kkt_max_off = max(res.kkt_max_off, kv["off"])
                res.kkt_max_on = max(res.kkt_max_on, kv["on"])
                res.kkt_sign_ok &= kv["sign_ok"]
            res.n_solves += 1
    if trials:
        rates /= trials
    return res
