import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from dpsn.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, EXIT_RUNTIME, main
from dpsn.interpret import ShapeletReport
from dpsn.synthetic import bump_dataset, interval_overlap, periodic_motifs
from dpsn.tscore import Dataset


def write_ucr(path, ds):
    lines = ["\t".join([str(ds.classes[ts.label])] + [repr(float(v)) for v in ts.values]) for ts in ds.series]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path, doc):
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture
def toy(tmp_path):
    rng = np.random.default_rng(0)
    t = np.arange(40)
    rows = [np.sin(2 * np.pi * (t + rng.uniform(0, 10)) / 10) + rng.normal(0, 0.1, 40) for _ in range(4)]
    rows += [np.sign(np.sin(2 * np.pi * (t + rng.uniform(0, 20)) / 20)) for _ in range(4)]
    ds = Dataset.from_arrays(rows, [1] * 4 + [2] * 4)
    train = write_ucr(tmp_path / "toy_TRAIN.tsv", ds)
    params = write_json(tmp_path / "params.json", {"window_len": 12, "num_coeffs": 2, "epochs": 40})
    return train, params


def bundle_bytes(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


class TestFit:
    def test_two_class_bundle(self, toy, tmp_path, capsys):
        train, params = toy
        assert main(["fit", "--train", str(train), "--params", str(params), "--out", str(tmp_path / "b")]) == EXIT_OK
        out = capsys.readouterr().out
        assert "K=2" in out and "D=" in out and "final_loss=" in out
        assert sorted(p.name for p in (tmp_path / "b").iterdir()) == ["net.json", "prototypes.json", "sfa.json"]
        protos = json.loads((tmp_path / "b" / "prototypes.json").read_text())
        assert len(protos["classes"]) == 2

    def test_byte_identical(self, toy, tmp_path):
        train, params = toy
        for name in ("a", "b"):
            assert main(["fit", "--train", str(train), "--params", str(params), "--seed", "3",
                         "--out", str(tmp_path / name)]) == EXIT_OK
        assert bundle_bytes(tmp_path / "a") == bundle_bytes(tmp_path / "b")

    def test_window_too_long(self, toy, tmp_path, capsys):
        train, _ = toy
        params = write_json(tmp_path / "p.json", {"window_len": 41, "num_coeffs": 2})
        assert main(["fit", "--train", str(train), "--params", str(params), "--out", str(tmp_path / "b")]) == EXIT_DATA
        assert "shrink the window length" in capsys.readouterr().err

    def test_unknown_param(self, toy, tmp_path):
        train, _ = toy
        params = write_json(tmp_path / "p.json", {"window_len": 8, "num_coeffs": 2, "hidden": 5})
        assert main(["fit", "--train", str(train), "--params", str(params), "--out", str(tmp_path / "b")]) == EXIT_CONFIG

    def test_missing_train_file(self, tmp_path):
        assert main(["fit", "--train", str(tmp_path / "none.tsv"), "--out", str(tmp_path / "b")]) == EXIT_DATA

    def test_single_class(self, tmp_path):
        train = write_ucr(tmp_path / "one.tsv", Dataset.from_arrays(np.ones((3, 20)), [1, 1, 1]))
        assert main(["fit", "--train", str(train), "--out", str(tmp_path / "b")]) == EXIT_DATA

    def test_nonfinite_training_is_runtime_error(self, toy, tmp_path):
        train, _ = toy
        params = write_json(tmp_path / "p.json", {"window_len": 12, "num_coeffs": 2, "epochs": 5,
                                                   "learning_rate": 1e308})
        with pytest.warns(RuntimeWarning):
            code = main(["fit", "--train", str(train), "--params", str(params), "--out", str(tmp_path / "b")])
        assert code == EXIT_RUNTIME


def test_predict(toy, tmp_path, capsys):
    train, params = toy
    main(["fit", "--train", str(train), "--params", str(params), "--out", str(tmp_path / "b")])
    assert main(["predict", "--bundle", str(tmp_path / "b"), "--test", str(train), "--out", str(tmp_path / "p")]) == 0
    rows = (tmp_path / "p" / "predictions.csv").read_text().splitlines()
    assert rows[0] == "index,label,predicted" and len(rows) == 9
    assert "accuracy=" in capsys.readouterr().out


def test_corrupt_bundle(toy, tmp_path):
    train, params = toy
    main(["fit", "--train", str(train), "--params", str(params), "--out", str(tmp_path / "b")])
    (tmp_path / "b" / "net.json").write_text("{")
    assert main(["predict", "--bundle", str(tmp_path / "b"), "--test", str(train),
                 "--out", str(tmp_path / "p")]) != EXIT_OK


class TestExplain:
    def test_bump_overlay(self, tmp_path):
        ds, bumps = bump_dataset(6, rng=np.random.default_rng(1))
        train = write_ucr(tmp_path / "bump_TRAIN.tsv", ds)
        params = write_json(tmp_path / "p.json", {"window_len": 20, "num_coeffs": 4, "epochs": 200})
        assert main(["fit", "--train", str(train), "--params", str(params), "--out", str(tmp_path / "b")]) == 0
        assert main(["explain", "--bundle", str(tmp_path / "b"), "--train", str(train),
                     "--out", str(tmp_path / "x")]) == 0
        report = ShapeletReport.load(tmp_path / "x" / "report.json")
        assert len(report.classes) == 2
        for k in range(2):
            root = ET.parse(tmp_path / "x" / f"class_{k}.svg").getroot()
            classes = [el.get("class") for el in root.iter() if el.tag.endswith("polyline")]
            assert classes == ["series", "shapelet"]
        c = report.classes[1]
        s = c.discriminative
        assert interval_overlap(s.start, s.length, bumps[c.representative_series_id], 16) >= 8

    def test_json_only(self, toy, tmp_path):
        train, params = toy
        main(["fit", "--train", str(train), "--params", str(params), "--out", str(tmp_path / "b")])
        assert main(["explain", "--bundle", str(tmp_path / "b"), "--train", str(train),
                     "--out", str(tmp_path / "x"), "--emit", "json"]) == 0
        assert [p.name for p in (tmp_path / "x").iterdir()] == ["report.json"]

    def test_single_class_rejected(self, toy, tmp_path):
        train, params = toy
        main(["fit", "--train", str(train), "--params", str(params), "--out", str(tmp_path / "b")])
        one = write_ucr(tmp_path / "one.tsv", Dataset.from_arrays(np.ones((3, 40)), [1, 1, 1]))
        assert main(["explain", "--bundle", str(tmp_path / "b"), "--train", str(one),
                     "--out", str(tmp_path / "x")]) == EXIT_DATA

    def test_bad_emit(self, toy, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["explain", "--bundle", "b", "--train", "t", "--out", "x", "--emit", "png"])
        assert exc.value.code == EXIT_CONFIG


class TestBenchmark:
    @pytest.fixture
    def files(self, tmp_path):
        train = write_ucr(tmp_path / "m_TRAIN.tsv", periodic_motifs(4, length=64, rng=np.random.default_rng(0)))
        test = write_ucr(tmp_path / "m_TEST.tsv", periodic_motifs(4, length=64, rng=np.random.default_rng(1)))
        params = write_json(tmp_path / "p.json", {"window_len": 16, "num_coeffs": 2, "epochs": 20})
        return train, test, params

    def _run(self, files, out, *extra):
        train, test, params = files
        return main(["benchmark", "--train", str(train), "--test", str(test), "--params", str(params),
                     "--shots", "2", "--repeats", "10", "--out", str(out), *extra])

    def test_ten_rows_and_identical_bytes(self, files, tmp_path):
        assert self._run(files, tmp_path / "r1", "--method", "nn_sfa") == EXIT_OK
        assert self._run(files, tmp_path / "r2", "--method", "nn_sfa") == EXIT_OK
        rows = (tmp_path / "r1" / "results.csv").read_text().splitlines()
        assert len(rows) == 11
        assert bundle_bytes(tmp_path / "r1") == bundle_bytes(tmp_path / "r2")
        assert {"results.csv", "summary.md", "summary.json"} == set(bundle_bytes(tmp_path / "r1"))

    def test_config_file(self, files, tmp_path):
        train, test, _ = files
        cfg = write_json(tmp_path / "bench.json", {
            "datasets": [{"name": "m", "train": train.name, "test": test.name, "window_len": 16, "num_coeffs": 2}],
            "methods": ["nn_euclid", "nn_sfa"], "modes": [{"shots": 2}, {"ratio": 0.5}], "repeats": 2})
        assert main(["benchmark", "--config", str(cfg), "--out", str(tmp_path / "r")]) == EXIT_OK
        summary = json.loads((tmp_path / "r" / "summary.json").read_text())
        assert [m["mode"] for m in summary["modes"]] == ["shots=2", "ratio=0.5"]

    def test_missing_dataset(self, files, tmp_path):
        _, test, params = files
        code = main(["benchmark", "--train", str(tmp_path / "gone.tsv"), "--test", str(test),
                     "--params", str(params), "--out", str(tmp_path / "r")])
        assert code == EXIT_DATA
        assert not (tmp_path / "r" / "summary.md").exists()

    def test_failed_cells_exit_nonzero(self, files, tmp_path):
        train, test, _ = files
        params = write_json(tmp_path / "bad.json", {"window_len": 80, "num_coeffs": 2})
        code = main(["benchmark", "--train", str(train), "--test", str(test), "--params", str(params),
                     "--method", "nn_sfa", "--method", "nn_euclid", "--shots", "2", "--repeats", "2",
                     "--out", str(tmp_path / "r")])
        assert code == EXIT_RUNTIME
        assert "error: " in (tmp_path / "r" / "results.csv").read_text()
        assert "failed cells" in (tmp_path / "r" / "summary.md").read_text()

    def test_needs_inputs(self, tmp_path):
        assert main(["benchmark", "--out", str(tmp_path / "r")]) == EXIT_CONFIG


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "dpsn.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "benchmark" in proc.stdout
