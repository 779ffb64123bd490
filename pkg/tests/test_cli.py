import csv
import json
import re

import numpy as np
import pytest

from rbfgen.cli import main
from rbfgen.config import (
    BeamConfig,
    ConfigError,
    CrossvalConfig,
    Demo1dConfig,
    PriorRecord,
    dump_config,
    parse_config,
    parse_config_data,
)
from rbfgen.demo import demo_dataset
from rbfgen.crossval import MonotonicityTable, synthetic_dataset, write_dataset
from rbfgen.priors import PriorKind

FAST_TRAIN = {"iterations": 20, "batchSize": 8, "hidden": [8]}


def write_cfg(path, doc):
    path.write_text(json.dumps(doc))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture()
def dataset_files(tmp_path):
    data, table = synthetic_dataset(6, seed=0)
    write_dataset(tmp_path / "data.csv", data)
    table.write_csv(tmp_path / "mono.csv")
    return tmp_path / "data.csv", tmp_path / "mono.csv"


class TestConfig:
    def test_minimal_defaults(self):
        cfg = parse_config_data({"command": "beam", "outDir": "out"})
        assert isinstance(cfg, BeamConfig)
        assert cfg.dims == (10,) and cfg.seeds == 5 and cfg.train_cfg.iterations == 2000
        assert cfg.train_cfg.learning_rate == 1e-3 and cfg.train_cfg.batch_size == 64

    def test_demo_defaults(self):
        cfg = parse_config_data({"command": "demo1d", "outDir": "o"})
        assert isinstance(cfg, Demo1dConfig)
        assert cfg.priors == ("prior_free", "point", "curvature", "monotone")

    def test_bad_value_names_key(self):
        with pytest.raises(ConfigError, match=r"trainCfg\.iterations"):
            parse_config_data({"command": "beam", "outDir": "o", "trainCfg": {"iterations": 0}})

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config_data({"command": "beam", "outDir": "o", "bogus": 1})

    def test_unknown_command(self):
        with pytest.raises(ConfigError, match="command"):
            parse_config_data({"command": "nope"})

    def test_roundtrip(self):
        cfg = parse_config_data({"command": "crossval", "outDir": "o", "datasetPath": "d.csv", "ncomp": 3})
        assert isinstance(cfg, CrossvalConfig)
        assert parse_config_data(dump_config(cfg)) == cfg
        assert "datasetPath" in dump_config(cfg)

    def test_relative_paths_resolve_to_config_dir(self, tmp_path):
        sub = tmp_path / "cfgs"
        sub.mkdir()
        cfg = parse_config(write_cfg(sub / "c.json", {"command": "demo1d", "outDir": "out"}))
        assert cfg.out_dir == str((sub / "out").resolve())

    def test_malformed_json(self, tmp_path):
        (tmp_path / "c.json").write_text("{not json")
        with pytest.raises(ConfigError, match="malformed"):
            parse_config(tmp_path / "c.json")

    def test_kl_prior_requires_sigma(self):
        with pytest.raises(ConfigError, match="mu and sigma"):
            parse_config_data({
                "command": "fit", "datasetPath": "d", "modelOut": "m.json",
                "priorSpec": [{"kind": "kl_point", "points": [[0.5]], "mu": 1.0}],
            })

    def test_prior_record_builds_slice(self):
        rec = PriorRecord(kind=PriorKind.MONO, dim=1, n=7)
        term = rec.build([[0, 1], [0, 2]])
        assert term.points.shape == (7, 2)
        np.testing.assert_allclose(term.points[:, 0], 0.5)
        np.testing.assert_allclose(term.points[[0, -1], 1], [0.0, 2.0])


class TestExitCodes:
    def test_config_error_exit_2(self, tmp_path, capsys):
        path = write_cfg(tmp_path / "c.json", {"command": "beam", "outDir": "o", "trainCfg": {"iterations": 0}})
        assert main(["beam", "--config", path]) == 2
        err = capsys.readouterr().err
        assert "rbfgen.config" in err and "trainCfg.iterations" in err

    def test_command_mismatch_exit_2(self, tmp_path):
        path = write_cfg(tmp_path / "c.json", {"command": "beam", "outDir": "o"})
        assert main(["demo1d", "--config", path]) == 2

    def test_missing_config_exit_2(self, tmp_path):
        assert main(["beam", "--config", str(tmp_path / "missing.json")]) == 2

    def test_missing_dataset_exit_3(self, tmp_path, capsys):
        path = write_cfg(tmp_path / "c.json", {
            "command": "crossval", "outDir": "o", "datasetPath": "nope.csv", "method": "baseline",
        })
        assert main(["crossval", "--config", path]) == 3
        assert "rbfgen." in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_bad_jobs(self, tmp_path):
        path = write_cfg(tmp_path / "c.json", {"command": "beam", "outDir": "o"})
        assert main(["beam", "--config", path, "--jobs", "0"]) == 2


class TestCommands:
    def test_beam_small(self, tmp_path):
        path = write_cfg(tmp_path / "c.json", {
            "command": "beam", "outDir": "out", "dims": [2], "seeds": 1, "trainCfg": FAST_TRAIN,
            "starts": 2, "nPos": 16, "ensembleSize": 8,
        })
        assert main(["beam", "--config", path, "--deterministic"]) == 0
        rows = read_csv(tmp_path / "out" / "beam_study.csv")
        assert rows[0][:4] == ["D", "ratio", "method", "seed"]
        assert [r[2] for r in rows[1:]] == ["baseline", "rbfgen"]
        assert all(r[-1] == "" for r in rows[1:])
        svg = (tmp_path / "out" / "beam_improvement.svg").read_text()
        assert len(re.findall(r'class="bar"', svg)) == 2
        man = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert man["deterministic"] is True and man["jobs"] == 1
        assert set(man["outputs"]) == {str(tmp_path / "out" / n) for n in
                                       ("beam_study.csv", "beam_summary.csv", "beam_improvement.svg")}

    def test_crossval_report_rows(self, tmp_path, dataset_files):
        data_path, mono_path = dataset_files
        path = write_cfg(tmp_path / "c.json", {
            "command": "crossval", "outDir": "out", "datasetPath": str(data_path), "monoTablePath": str(mono_path),
            "ncomp": 2, "method": "both", "trainCfg": FAST_TRAIN, "ensembleSize": 8, "nGrid": 4,
        })
        assert main(["crossval", "--config", path, "--deterministic"]) == 0
        rows = read_csv(tmp_path / "out" / "crossval_report.csv")
        assert len(rows) == 1 + 2 * 6
        assert [r[0] for r in rows[1:7]] == ["q1", "q2", "q3", "q4", "q5", "overall"]
        preds = read_csv(tmp_path / "out" / "crossval_predictions.csv")
        assert len(preds) == 1 + 2 * 5 * 30
        svg = (tmp_path / "out" / "crossval_are.svg").read_text()
        assert len(re.findall(r'class="bar"', svg)) == 10

    def test_fit_then_predict(self, tmp_path, dataset_files):
        data_path, _ = dataset_files
        fit = write_cfg(tmp_path / "fit.json", {
            "command": "fit", "datasetPath": str(data_path), "modelOut": "model/m.json", "qoi": "q2",
            "priorSpec": [{"kind": "pos", "dim": 0, "n": 8}], "trainCfg": FAST_TRAIN, "nCenters": 12,
        })
        assert main(["fit", "--config", fit]) == 0
        assert (tmp_path / "model" / "m.json").exists()
        assert (tmp_path / "model" / "m.loss.csv").exists()
        assert (tmp_path / "model" / "manifest.json").exists()

        X = np.loadtxt(data_path, delimiter=",", skiprows=1)
        np.savetxt(tmp_path / "pts.csv", X[:2, :17], delimiter=",")
        pred = write_cfg(tmp_path / "pred.json", {
            "command": "predict", "modelPath": "model/m.json", "pointsPath": "pts.csv", "outCsv": "pred/p.csv",
            "ensembleSize": 16,
        })
        assert main(["predict", "--config", pred]) == 0
        rows = read_csv(tmp_path / "pred" / "p.csv")
        assert rows[0][-3:] == ["mean", "lo", "hi"]
        for r, y in zip(rows[1:], X[:2, 17 + 1]):
            mean, lo, hi = map(float, r[-3:])
            # every ensemble member interpolates the training data, so the band collapses
            assert mean == pytest.approx(y, rel=1e-6)
            assert hi - lo == pytest.approx(0.0, abs=1e-6 * abs(y))

    def test_predict_wrong_columns_exit_3(self, tmp_path, dataset_files):
        data_path, _ = dataset_files
        fit = write_cfg(tmp_path / "fit.json", {
            "command": "fit", "datasetPath": str(data_path), "modelOut": "m.json",
            "priorSpec": [{"kind": "pos", "dim": 0, "n": 4}], "trainCfg": FAST_TRAIN, "nCenters": 10,
        })
        assert main(["fit", "--config", fit]) == 0
        (tmp_path / "pts.csv").write_text("0.1,0.2\n")
        pred = write_cfg(tmp_path / "pred.json", {
            "command": "predict", "modelPath": "m.json", "pointsPath": "pts.csv", "outCsv": "p.csv",
        })
        assert main(["predict", "--config", pred]) == 3

    def test_demo1d_selected_variant(self, tmp_path):
        path = write_cfg(tmp_path / "c.json", {
            "command": "demo1d", "outDir": "out", "priors": ["monotone"], "trainCfg": {**FAST_TRAIN, "zeroFinal": False},
            "ensembleSize": 5, "nPlot": 11,
        })
        assert main(["demo1d", "--config", path, "--deterministic"]) == 0
        curves = read_csv(tmp_path / "out" / "demo1d_monotone_curves.csv")
        assert len(curves) == 12 and len(curves[0]) == 4 + 5
        svg = (tmp_path / "out" / "demo1d_monotone.svg").read_text()
        assert len(re.findall(r'class="member"', svg)) == 5
        assert len(re.findall(r'class="data"', svg)) == demo_dataset().X.shape[0]
        assert not (tmp_path / "out" / "demo1d_point_curves.csv").exists()


class TestDeterminism:
    def _run(self, tmp_path, name, doc, command):
        d = tmp_path / name
        d.mkdir()
        assert main([command, "--config", write_cfg(d / "c.json", doc), "--deterministic"]) == 0
        return {p.name: p.read_bytes() for p in (d / "out").glob("*.csv")}

    def test_beam_byte_identical(self, tmp_path):
        doc = {"command": "beam", "outDir": "out", "dims": [2], "seeds": 2, "trainCfg": FAST_TRAIN,
               "starts": 2, "nPos": 16, "ensembleSize": 8}
        a, b = self._run(tmp_path, "a", doc, "beam"), self._run(tmp_path, "b", doc, "beam")
        assert a and a == b

    def test_crossval_byte_identical(self, tmp_path, dataset_files):
        data_path, mono_path = dataset_files
        doc = {"command": "crossval", "outDir": "out", "datasetPath": str(data_path),
               "monoTablePath": str(mono_path), "ncomp": 2, "trainCfg": FAST_TRAIN, "ensembleSize": 8, "nGrid": 4}
        a, b = self._run(tmp_path, "a", doc, "crossval"), self._run(tmp_path, "b", doc, "crossval")
        assert a and a == b
