import csv

import numpy as np
import pytest
import yaml

from conftest import small_schema
from hcrcred.cli import main
from hcrcred.dataset import Dataset, DatasetSchema, VariableSpec, save_schema, write_csv


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def files(tmp_path, small_dataset):
    schema = tmp_path / "schema.yaml"
    data = tmp_path / "data.csv"
    save_schema(small_dataset.schema, schema)
    write_csv(small_dataset, data)
    return tmp_path, str(schema), str(data)


def run(*argv):
    return main([str(a) for a in argv])


class TestTrain:
    def test_writes_model_and_summary(self, files, capsys):
        d, schema, data = files
        assert run("train", "--schema", schema, "--input", data, "--model", d / "m.json") == 0
        out = capsys.readouterr().out
        assert out.startswith("p=8 m=4 n=60 ")
        assert "train_mean_log2_density=" in out

    def test_zero_degree_is_usage_error(self, files):
        d, schema, data = files
        with pytest.raises(SystemExit) as e:
            run("train", "--schema", schema, "--input", data, "--model", d / "m.json",
                "--degree", 0)
        assert e.value.code == 2
        assert not (d / "m.json").exists()

    def test_byte_identical_rerun(self, files):
        d, schema, data = files
        for name in ("a.json", "b.json"):
            run("train", "--schema", schema, "--input", data, "--model", d / name, "--degree", 3)
        assert (d / "a.json").read_bytes() == (d / "b.json").read_bytes()

    def test_bad_input_exits_one(self, files, capsys):
        d, schema, _ = files
        bad = d / "bad.csv"
        bad.write_text("inc,age,edu,male\n1.0,abc,low,0\n")
        assert run("train", "--schema", schema, "--input", bad, "--model", d / "m.json") == 1
        assert "row 1" in capsys.readouterr().err

    def test_bad_calibration_flag(self, files):
        d, schema, data = files
        with pytest.raises(SystemExit):
            run("train", "--schema", schema, "--input", data, "--model", d / "m.json",
                "--calibration", "clip:-1")


class TestScore:
    def test_exact_flag_count(self, tmp_path):
        rng = np.random.default_rng(0)
        s = DatasetSchema((VariableSpec("y", "continuous", is_target=True),
                           VariableSpec("x", "continuous", feature_degree=2)))
        x = rng.random(100)
        ds = Dataset(s, {"y": x + 0.1 * rng.random(100), "x": x})
        save_schema(s, tmp_path / "s.yaml")
        write_csv(ds, tmp_path / "d.csv")
        run("train", "--schema", tmp_path / "s.yaml", "--input", tmp_path / "d.csv",
            "--model", tmp_path / "m.json", "--degree", 2)
        assert run("score", "--input", tmp_path / "d.csv", "--model", tmp_path / "m.json",
                   "--flag-fraction", 0.05, "--out", tmp_path / "s.csv") == 0
        rows = read_rows(tmp_path / "s.csv")
        assert len(rows) == 100
        assert sum(r["flagged"] == "1" for r in rows) == 5
        assert list(rows[0]) == ["record", "raw_score", "calibrated_density", "log2_density",
                                 "flagged", "expected_value", "std_dev"]

    def test_summary_on_stderr(self, files, capsys):
        d, schema, data = files
        run("train", "--schema", schema, "--input", data, "--model", d / "m.json", "--degree", 2)
        capsys.readouterr()
        run("score", "--input", data, "--model", d / "m.json", "--flag-fraction", 0.1,
            "--out", d / "s.csv")
        err = capsys.readouterr().err
        assert err.startswith("flagged=6 n=60 threshold=")
        raw = np.array([float(r["raw_score"]) for r in read_rows(d / "s.csv")])
        assert f"negative_raw_fraction={np.mean(raw < 0):.6f}" in err

    def test_unseen_category(self, files):
        d, schema, data = files
        run("train", "--schema", schema, "--input", data, "--model", d / "m.json", "--degree", 2)
        new = d / "new.csv"
        new.write_text("inc,age,edu,male\n1500,33,doctorate,1\n")
        assert run("score", "--input", new, "--model", d / "m.json", "--out", d / "s.csv") == 0
        assert np.isfinite(float(read_rows(d / "s.csv")[0]["raw_score"]))

    def test_featureless_model_scores_one(self, tmp_path):
        # the only feature is constant, so the prediction is the near-uniform marginal
        s = DatasetSchema((VariableSpec("y", "continuous", is_target=True),
                           VariableSpec("k", "categorical")))
        ds = Dataset(s, {"y": np.arange(100.0), "k": ["same"] * 100})
        save_schema(s, tmp_path / "s.yaml")
        write_csv(ds, tmp_path / "d.csv")
        with pytest.warns(UserWarning):
            run("train", "--schema", tmp_path / "s.yaml", "--input", tmp_path / "d.csv",
                "--model", tmp_path / "m.json", "--degree", 3)
        run("score", "--input", tmp_path / "d.csv", "--model", tmp_path / "m.json",
            "--no-moments", "--out", tmp_path / "s.csv")
        raw = np.array([float(r["raw_score"]) for r in read_rows(tmp_path / "s.csv")])
        np.testing.assert_allclose(raw, 1.0, atol=1e-3)

    def test_stdout(self, files, capsys):
        d, schema, data = files
        run("train", "--schema", schema, "--input", data, "--model", d / "m.json", "--degree", 2)
        capsys.readouterr()
        run("score", "--input", data, "--model", d / "m.json")
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 61


class TestReports:
    def test_density_rows(self, files):
        d, schema, data = files
        run("train", "--schema", schema, "--input", data, "--model", d / "m.json", "--degree", 3)
        assert run("density", "--model", d / "m.json", "--input", data, "--records", "0,4",
                   "--resolution", 25, "--original", "--out", d / "dens.csv") == 0
        rows = read_rows(d / "dens.csv")
        assert len(rows) == 50
        assert {r["record"] for r in rows} == {"0", "4"}
        assert all(float(r["calibrated"]) > 0 for r in rows)
        assert "original_density" in rows[0]

    def test_density_bad_record(self, files):
        d, schema, data = files
        run("train", "--schema", schema, "--input", data, "--model", d / "m.json", "--degree", 2)
        with pytest.raises(SystemExit):
            run("density", "--model", d / "m.json", "--input", data, "--records", "99")

    def test_evaluate_one_row_per_degree(self, files):
        d, schema, data = files
        assert run("evaluate", "--schema", schema, "--input", data, "--degrees", "1-3",
                   "--repeats", 2, "--seed", 7, "--out", d / "ev.csv") == 0
        rows = read_rows(d / "ev.csv")
        assert [r["degree"] for r in rows] == ["1", "2", "3"]
        assert all(r["repeats"] == "2" and r["seed"] == "7" for r in rows)

    def test_evaluate_reproducible(self, files):
        d, schema, data = files
        for name in ("e1.csv", "e2.csv"):
            run("evaluate", "--schema", schema, "--input", data, "--degree", 2, "--repeats", 3,
                "--out", d / name)
        assert (d / "e1.csv").read_bytes() == (d / "e2.csv").read_bytes()

    def test_importance(self, files):
        d, schema, data = files
        assert run("importance", "--schema", schema, "--input", data, "--degree", 2,
                   "--repeats", 2, "--out", d / "imp.csv") == 0
        rows = read_rows(d / "imp.csv")
        assert [r["variable"] for r in rows] == ["age", "edu", "male"]
        greedy = read_rows(d / "imp_greedy.csv")
        assert len(greedy) == 3
        best = [float(r["best_loglik_bits"]) for r in greedy]
        assert best == sorted(best)

    def test_pairs_independent(self, tmp_path):
        rng = np.random.default_rng(1)
        s = DatasetSchema((VariableSpec("y", "continuous", is_target=True),
                           VariableSpec("x", "continuous")))
        ds = Dataset(s, {"y": rng.random(20000), "x": rng.random(20000)})
        save_schema(s, tmp_path / "s.yaml")
        write_csv(ds, tmp_path / "d.csv")
        assert run("pairs", "--schema", tmp_path / "s.yaml", "--input", tmp_path / "d.csv",
                   "--var-b", "x", "--degree", 2, "--resolution", 3,
                   "--out", tmp_path / "p.csv") == 0
        with open(tmp_path / "p.csv") as fh:
            table = list(csv.reader(fh))
        assert table[0][0] == "y\\x"
        vals = np.array([[float(v) for v in row[1:]] for row in table[1:]])
        assert vals.shape == (3, 3)
        np.testing.assert_allclose(vals, 1.0, atol=0.1)

    def test_pairs_needs_continuous(self, files):
        d, schema, data = files
        with pytest.raises(SystemExit):
            run("pairs", "--schema", schema, "--input", data, "--var-b", "edu")


class TestGenerate:
    def test_generate_then_train(self, tmp_path):
        cfg = {"n": 500, "categories": [{"level": "a", "probability": 0.5, "coefficients": [0.4]},
                                        {"level": "b", "probability": 0.5,
                                         "coefficients": [-0.4]}],
               "noise": [{"name": "u", "kind": "continuous", "degree": 2}]}
        (tmp_path / "g.yaml").write_text(yaml.safe_dump(cfg))
        for name in ("d1.csv", "d2.csv"):
            assert run("generate", "--config", tmp_path / "g.yaml", "--seed", 3,
                       "--out", tmp_path / name, "--schema-out", tmp_path / "s.yaml") == 0
        assert (tmp_path / "d1.csv").read_bytes() == (tmp_path / "d2.csv").read_bytes()
        assert run("train", "--schema", tmp_path / "s.yaml", "--input", tmp_path / "d1.csv",
                   "--model", tmp_path / "m.json", "--degree", 1) == 0

    def test_schema_fixture_roundtrip(self, tmp_path):
        save_schema(small_schema(), tmp_path / "s.json")
        from hcrcred.dataset import load_schema
        assert load_schema(tmp_path / "s.json") == small_schema()
