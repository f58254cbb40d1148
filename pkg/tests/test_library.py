import dataclasses

import numpy as np
import pytest

from stsense.exceptions import DataError
from stsense.harness import sample_measurements
from stsense.library import (
    RegimeLibrary,
    build_library,
    classify,
    load_library,
    model_for,
    pick_winner,
    regime_scores,
    save_library,
)
from stsense.reduction import FourierTerm, RegimeModel, evaluate_model
from stsense.sensing import MeasurementSet, build_phi, place_sensors


def toy_model(label, rng, n=10, n_terms=3, n_modes=2):
    q, _ = np.linalg.qr(rng.normal(size=(n, n_modes)))
    terms = [
        FourierTerm(1 + j % n_modes, 1 + 2 * j, 2 * np.pi * (1 + 2 * j) / 10.0, rng.normal(), rng.normal())
        for j in range(n_terms)
    ]
    return RegimeModel(label, terms, q, tuple(range(1, n_modes + 1)), 0.1, 100)


def samples_of(model, rng, n=40):
    tau = rng.uniform(0, 10, n)
    chi = rng.integers(1, model.n_space + 1, n)
    p = np.array([evaluate_model(model, [t], [c])[0, 0] for t, c in zip(tau, chi)])
    return MeasurementSet(tau, chi, p, model.n_space)


@pytest.fixture
def five():
    rng = np.random.default_rng(0)
    return [toy_model(f"r{i}", rng) for i in range(5)]


class TestLibrary:
    def test_spans(self, five):
        lib = RegimeLibrary.from_models(five)
        assert lib.column_spans == ((0, 6), (6, 12), (12, 18), (18, 24), (24, 30))
        assert lib.n_columns == 30 and len(lib) == 5 and lib.labels == ["r0", "r1", "r2", "r3", "r4"]

    def test_uneven_spans(self):
        rng = np.random.default_rng(1)
        lib = RegimeLibrary.from_models([toy_model("a", rng, n_terms=1), toy_model("b", rng, n_terms=4)])
        assert lib.column_spans == ((0, 2), (2, 10))

    def test_psi_blocks_are_phi_bit_for_bit(self, five):
        meas = samples_of(five[2], np.random.default_rng(2))
        lib, psi = build_library(five, meas)
        for m, (s, e) in zip(five, lib.column_spans):
            assert psi[:, s:e].tobytes() == np.ascontiguousarray(build_phi(m, meas).values).tobytes()

    def test_preset_library_shape(self, preset, preset_models):
        sensors = place_sensors(preset_models, 20).indices
        meas = sample_measurements(preset[0], sensors, 100, np.random.default_rng(0))
        _, psi = build_library(preset_models, meas)
        assert psi.shape == (2000, 2 * sum(m.n_terms for m in preset_models))

    def test_validation(self, five):
        with pytest.raises(DataError):
            RegimeLibrary.from_models(five[:1])
        with pytest.raises(DataError):
            RegimeLibrary.from_models([five[0], dataclasses.replace(five[1], label="r0")])
        other = toy_model("z", np.random.default_rng(3), n=12)
        with pytest.raises(DataError):
            RegimeLibrary.from_models([five[0], other])
        lib = RegimeLibrary.from_models(five)
        with pytest.raises(DataError):
            lib.index("nope")
        assert model_for(lib, "r3") is five[3]
        with pytest.raises(DataError):
            build_library(lib, MeasurementSet([0.0], [1], [1.0], 12))


class TestScores:
    def test_block_norm_over_sqrt_width(self):
        rng = np.random.default_rng(4)
        lib = RegimeLibrary.from_models([toy_model("a", rng, n_terms=1), toy_model("b", rng, n_terms=2)])
        s = regime_scores(lib, [1.0, -1.0, 0.5, 0.5, -0.5, 0.5])
        np.testing.assert_allclose(s, [2 / np.sqrt(2), 2 / np.sqrt(4)])

    def test_pick_winner(self):
        assert pick_winner([0.1, 0.3, 0.2]) == (1, False)
        assert pick_winner([0.3, 0.3 * (1 + 1e-12), 0.2]) == (0, True)
        assert pick_winner([0.0, 0.0]) == (0, True)


class TestClassify:
    def test_noise_free_samples_pick_their_regime(self, five):
        rng = np.random.default_rng(5)
        for i, m in enumerate(five):
            meas = samples_of(m, rng)
            lib, psi = build_library(five, meas)
            res = classify(lib, psi, meas.value, 0.01 * np.linalg.norm(meas.value))
            assert res.winner == m.label and res.winner_index == i and not res.tied

    def test_zero_measurement_ties_all(self, five):
        meas = MeasurementSet([0.1, 0.2], [1, 2], [0.0, 0.0], 10)
        lib, psi = build_library(five, meas)
        res = classify(lib, psi, meas.value, 0.0)
        assert res.tied and res.winner_index == 0
        np.testing.assert_array_equal(res.scores, 0.0)

    def test_identical_models_tie_on_the_first(self, five):
        twin = dataclasses.replace(five[1], label="twin")
        models = [five[0], five[1], twin]
        meas = samples_of(five[1], np.random.default_rng(6))
        lib, psi = build_library(models, meas)
        res = classify(lib, psi, meas.value, 0.01 * np.linalg.norm(meas.value))
        assert res.tied and res.winner == "r1"

    def test_order_does_not_change_the_decision(self, five):
        meas = samples_of(five[3], np.random.default_rng(7))
        p = meas.value + 0.01 * np.random.default_rng(8).standard_normal(len(meas))
        delta = 0.1 * np.linalg.norm(p)
        lib, psi = build_library(five, meas)
        base = classify(lib, psi, p, delta)
        order = [4, 2, 0, 3, 1]
        lib2, psi2 = build_library([five[i] for i in order], meas)
        perm = classify(lib2, psi2, p, delta)
        assert perm.winner == base.winner
        np.testing.assert_allclose(perm.scores, base.scores[order], rtol=1e-6, atol=1e-12)

    def test_column_count_checked(self, five):
        lib = RegimeLibrary.from_models(five)
        with pytest.raises(DataError):
            classify(lib, np.ones((3, 4)), np.ones(3), 0.1)

    def test_to_dict(self, five):
        meas = samples_of(five[0], np.random.default_rng(9))
        lib, psi = build_library(five, meas)
        d = classify(lib, psi, meas.value, 0.05).to_dict(lib.labels)
        assert d["winner"] == "r0" and set(d["scores"]) == set(lib.labels)
        assert d["diagnostics"]["mode"] in ("zero", "constrained", "limit")


class TestPersistence:
    def test_round_trip(self, five, tmp_path):
        save_library(five, tmp_path / "lib")
        lib = load_library(tmp_path / "lib")
        assert lib.labels == [m.label for m in five]
        assert lib.column_spans == RegimeLibrary.from_models(five).column_spans
        meas = samples_of(five[1], np.random.default_rng(10))
        assert build_library(lib, meas)[1].tobytes() == build_library(five, meas)[1].tobytes()

    def test_odd_labels_make_safe_file_names(self, tmp_path):
        rng = np.random.default_rng(11)
        models = [toy_model("Re = 40/a", rng), toy_model("ν", rng)]
        save_library(models, tmp_path)
        assert load_library(tmp_path).labels == ["Re = 40/a", "ν"]
        assert sorted(p.name for p in tmp_path.iterdir() if p.name != "index.json")[0].startswith("regime_00_Re___40_a")

    def test_missing_index(self, tmp_path):
        with pytest.raises(DataError):
            load_library(tmp_path)
