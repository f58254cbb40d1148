import json

import numpy as np
import pytest

from stsense import __version__, cli
from stsense.exceptions import ConvergenceError
from stsense.library import load_library
from stsense.reduction import svd_truncate
from stsense.snapshot import load_snapshots

LABELS = ("40", "150", "300", "800", "1000")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth", "--out", str(root / "data"), "--measure", "300", "--seed", "2"]) == 0
    snaps = [str(root / "data" / f"{lab}.spsn") for lab in LABELS]
    assert cli.main(["train", *snaps, "--out", str(root / "lib")]) == 0
    return root


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_synth_outputs(workspace):
    data = workspace / "data"
    assert sorted(p.name for p in data.iterdir()) == sorted(
        [f"{lab}.spsn" for lab in LABELS] + ["specs.json", "measurements.csv"]
    )
    mat = load_snapshots(data / "800.spsn")
    assert mat.shape == (64, 400) and mat.regime_label == "800"
    assert len((data / "measurements.csv").read_text().splitlines()) == 2001


def test_train_table_and_library(workspace, capsys, tmp_path):
    snaps = [str(workspace / "data" / f"{lab}.spsn") for lab in LABELS]
    code, out, _ = run(capsys, "--out", str(tmp_path / "lib"), "train", *snaps)
    assert code == 0 and "rank" in out and "library written" in out
    assert load_library(tmp_path / "lib").labels == list(LABELS)
    # same inputs, same bytes
    for p in (workspace / "lib").iterdir():
        assert (tmp_path / "lib" / p.name).read_bytes() == p.read_bytes()


def test_train_full_energy_keeps_numerical_rank(workspace, capsys, tmp_path):
    snap = workspace / "data" / "150.spsn"
    code, _, _ = run(
        capsys, "train", str(snap), str(workspace / "data" / "40.spsn"),
        "--spatial-energy", "1.0", "--out", str(tmp_path / "full"),
    )
    assert code == 0
    mat = load_snapshots(snap)
    numerical = int(np.linalg.matrix_rank(mat.values))
    assert load_library(tmp_path / "full").models[0].rank == numerical == svd_truncate(mat, 1.0).rank


def test_classify(workspace, capsys, tmp_path):
    args = ["classify", "--library", str(workspace / "lib"), "--measurements", str(workspace / "data" / "measurements.csv")]
    code, out, _ = run(capsys, *args, "--out", str(tmp_path))
    report = json.loads(out)
    assert code == 0 and report["winner"] == "300"
    assert max(report["scores"], key=report["scores"].get) == "300"
    assert json.loads((tmp_path / "classification.json").read_text()) == report

    code, out, _ = run(capsys, *args, "--delta", "1.0")
    report = json.loads(out)
    assert code == 0 and set(report["scores"].values()) == {0.0}
    assert report["diagnostics"]["mode"] == "zero"


def test_reconstruct_auto_and_fixed(workspace, capsys, tmp_path):
    base = [
        "reconstruct", "--library", str(workspace / "lib"),
        "--measurements", str(workspace / "data" / "measurements.csv"),
        "--truth", str(workspace / "data" / "300.spsn"),
    ]
    code, out, _ = run(capsys, *base, "--out", str(tmp_path / "auto"))
    auto = json.loads(out)
    assert code == 0 and auto["regime"] == "300" and auto["relative_l2_error"] <= 0.05
    rec = load_snapshots(tmp_path / "auto" / "reconstruction.spsn")
    assert rec.shape == (64, 400) and rec.regime_label == "300"
    assert "classification" in json.loads((tmp_path / "auto" / "report.json").read_text())

    code, out, _ = run(capsys, *base, "--regime", "150", "--out", str(tmp_path / "wrong"))
    wrong = json.loads(out)
    assert code == 0 and wrong["relative_l2_error"] > auto["relative_l2_error"]


def test_reconstruct_custom_grid(workspace, capsys, tmp_path):
    code, _, _ = run(
        capsys, "reconstruct", "--library", str(workspace / "lib"),
        "--measurements", str(workspace / "data" / "measurements.csv"),
        "--regime", "300", "--t0", "1.0", "--dt", "0.5", "--m", "6", "--out", str(tmp_path),
    )
    rec = load_snapshots(tmp_path / "reconstruction.spsn")
    assert code == 0 and rec.shape == (64, 6) and rec.grid.t0 == 1.0 and rec.grid.dt == 0.5


def test_eval_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "eval", "--trials", "5", "--seed", "1", "--out", str(tmp_path), "--jobs", "2")
    assert code == 0 and "success rate" in out
    data = json.loads((tmp_path / "eval.json").read_text())
    assert data["metadata"]["seed"] == 1 and data["metadata"]["version"] == __version__
    assert data["trials"] == 5 and np.asarray(data["rates"]).shape == (2, 4)
    assert (tmp_path / "rates.csv").read_text().splitlines()[0].startswith("delta,")
    assert len((tmp_path / "rates_plot.csv").read_text().splitlines()) == 5


def test_config_file(capsys, tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"trials": 2, "deltas": [0.3], "noise_stds": [0.0]}))
    code, _, _ = run(capsys, "eval", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "e"))
    data = json.loads((tmp_path / "e" / "eval.json").read_text())
    assert code == 0 and data["deltas"] == [0.3] and data["trials"] == 2


class TestExitCodes:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(["--version"])
        assert exc.value.code == 0 and __version__ in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [[], ["fly"], ["classify", "--library", "x"], ["eval", "--trials", "many"]])
    def test_usage_errors(self, argv, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main(argv)
        assert exc.value.code == cli.EXIT_USAGE

    def test_empty_measurements(self, workspace, capsys, tmp_path):
        (tmp_path / "m.csv").write_text("tau,chi,value\n")
        code, _, err = run(capsys, "classify", "--library", str(workspace / "lib"), "--measurements", str(tmp_path / "m.csv"))
        assert code == cli.EXIT_USAGE and "no measurements" in err

    def test_unknown_measure_label(self, capsys, tmp_path):
        code, _, _ = run(capsys, "synth", "--out", str(tmp_path), "--measure", "9999")
        assert code == cli.EXIT_USAGE

    def test_data_errors(self, workspace, capsys, tmp_path):
        meas = str(workspace / "data" / "measurements.csv")
        assert run(capsys, "classify", "--library", str(tmp_path), "--measurements", meas)[0] == cli.EXIT_DATA
        assert run(capsys, "classify", "--library", str(workspace / "lib"), "--measurements", str(tmp_path / "none.csv"))[0] == cli.EXIT_DATA
        code, _, _ = run(capsys, "reconstruct", "--library", str(workspace / "lib"), "--measurements", meas, "--regime", "5", "--out", str(tmp_path))
        assert code == cli.EXIT_DATA
        (tmp_path / "bad.spsn").write_bytes(b"nope")
        assert run(capsys, "train", str(tmp_path / "bad.spsn"), "--out", str(tmp_path / "l"))[0] == cli.EXIT_DATA
        (tmp_path / "cfg.json").write_text('{"trials": 0}')
        assert run(capsys, "--config", str(tmp_path / "cfg.json"), "eval")[0] == cli.EXIT_DATA

    def test_solver_failure(self, workspace, capsys, monkeypatch):
        def boom(*a, **k):
            raise ConvergenceError("no progress", {"lambda": 0.5, "iterations": 3})

        monkeypatch.setattr(cli, "classify", boom)
        code, _, err = run(
            capsys, "classify", "--library", str(workspace / "lib"),
            "--measurements", str(workspace / "data" / "measurements.csv"),
        )
        assert code == cli.EXIT_SOLVER and '"lambda": 0.5' in err
