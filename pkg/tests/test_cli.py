import json
import os

import pytest

from glucolens.cli import COMMAND_OPTS, build_parser, main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["--seed", "3", "synth", "--out-dir", str(d / "raw"), "--participants", "3"]) == 0
    assert main(["ingest", "--data-dir", str(d / "raw"), "--out", str(d / "ds.json")]) == 0
    assert main(["featurize", "--dataset", str(d / "ds.json"), "--out", str(d / "f.csv")]) == 0
    return d


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_ingest_is_byte_identical(workspace, capsys):
    out = workspace / "ds2.json"
    assert main(["ingest", "--data-dir", str(workspace / "raw"), "--out", str(out)]) == 0
    assert read(out) == read(workspace / "ds.json")
    assert "ingested 3 participants" in capsys.readouterr().out


def test_missing_cgm_file(workspace, tmp_path, capsys):
    raw = workspace / "raw"
    code = main(["ingest", "--data-dir", str(raw), "--cgm-dir", str(tmp_path / "nowhere"),
                 "--out", str(tmp_path / "x.json")])
    assert code == 2
    assert str(tmp_path / "nowhere") in capsys.readouterr().err
    assert not (tmp_path / "x.json").exists()


def test_parse_error_names_file_and_line(workspace, tmp_path, capsys):
    bad = tmp_path / "participants.csv"
    bad.write_text("participant,bmi\nP01,abc\n")
    code = main(["ingest", "--data-dir", str(workspace / "raw"), "--roster", str(bad),
                 "--out", str(tmp_path / "x.json")])
    assert code == 2
    err = capsys.readouterr().err
    assert str(bad) in err and "line 2" in err


def test_train_predict_grid_names(workspace):
    model = workspace / "rf.json"
    args = ["train", "--features", str(workspace / "f.csv"), "--feature-set", "all",
            "--model", "rf", "--n-est", "10", "--out", str(model)]
    assert main(args) == 0
    first = read(model)
    assert main(args) == 0 and read(model) == first
    doc = json.loads(first)
    assert doc["model"]["kind"] == "forest" and doc["model"]["hyperparameters"]["n_estimators"] == 10
    assert main(["train", "--features", str(workspace / "f.csv"), "--feature-set", "sensor_gl",
                 "--model", "rf", "--out", str(model)]) == 2
    preds = workspace / "p.csv"
    assert main(["predict", "--model-file", str(model), "--features", str(workspace / "f.csv"),
                 "--out", str(preds)]) == 0
    assert read(preds).decode().splitlines()[0] == "row,prediction"


def test_evaluate_split_sweep_preset(workspace, capsys):
    out = workspace / "sweep"
    code = main(["evaluate", "--features", str(workspace / "f.csv"), "--task", "classification",
                 "--model", "rf", "--n-est", "3", "--n-seeds", "2", "--preset", "table6-sweep",
                 "--out-dir", str(out)])
    assert code == 0
    names = sorted(os.listdir(out))
    assert len([n for n in names if n.endswith(".json")]) == 6
    assert "report-95-5.json" in names
    text = capsys.readouterr().out
    assert text.count("experiment ") == 6


def test_evaluate_hybrid_with_mock_providers(workspace):
    out = workspace / "hyb"
    code = main(["evaluate", "--features", str(workspace / "f.csv"), "--hybrid-mode", "gly_hybrid",
                 "--n-est", "5", "--n-seeds", "2", "--out-dir", str(out)])
    assert code == 0
    assert (out / "llm_cache.json").exists()
    assert json.loads(read(out / "report.json"))["config"]["hybrid_mode"] == "gly_hybrid"


def test_config_file_and_precedence(workspace, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_est": 4, "model": "rf", "seed": 2}))
    out = tmp_path / "m.json"
    assert main(["--config", str(cfg), "train", "--features", str(workspace / "f.csv"),
                 "--n-est", "6", "--out", str(out)]) == 0
    doc = json.loads(read(out))
    assert doc["model"]["hyperparameters"]["n_estimators"] == 6 and doc["seed"] == 2
    cfg.write_text(json.dumps({"n_est": 4, "colour": "blue"}))
    assert main(["--config", str(cfg), "train", "--features", str(workspace / "f.csv"),
                 "--out", str(out)]) == 2


def test_explain(workspace, tmp_path, capsys):
    clf = tmp_path / "clf.json"
    assert main(["train", "--features", str(workspace / "f.csv"), "--task", "classification",
                 "--model", "rf", "--n-est", "10", "--out", str(clf)]) == 0
    report = tmp_path / "cf.txt"
    assert main(["explain", "--model-file", str(clf), "--features", str(workspace / "f.csv"),
                 "--row", "1", "--budget", "1500", "--out", str(report)]) == 0
    assert read(report).decode().startswith("Original prediction:")
    assert json.loads(read(tmp_path / "cf.json"))["counterfactuals"]


def test_explain_constant_model_exits_1(workspace, tmp_path, capsys):
    import numpy as np
    from glucolens.features import FeatureMatrix

    m = FeatureMatrix.from_csv(read(workspace / "f.csv").decode())
    m.targets["hyper"] = np.zeros(len(m), dtype=int)
    const_csv = tmp_path / "const.csv"
    const_csv.write_text(m.to_csv())
    clf = tmp_path / "const.json"
    assert main(["train", "--features", str(const_csv), "--task", "classification", "--model", "rf",
                 "--n-est", "3", "--balance", "false", "--out", str(clf)]) == 0
    code = main(["explain", "--model-file", str(clf), "--features", str(const_csv),
                 "--target-label", "1", "--budget", "300"])
    assert code == 1
    assert "NoCounterfactualFound" in capsys.readouterr().err


def test_help_lists_every_flag(capsys):
    parser = build_parser()
    for name, opts in COMMAND_OPTS.items():
        with pytest.raises(SystemExit):
            parser.parse_args([name, "--help"])
        text = capsys.readouterr().out
        for o in opts:
            assert o.flags[0] in text
    assert main([]) == 2
