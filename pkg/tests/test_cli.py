import csv
import json

import numpy as np
import pytest

from riskgraph import cli, dist
from riskgraph.train import load_checkpoint, save_checkpoint

BASE = {
    "paths": {"output_dir": "run"},
    "study_period": {"start": "2019-01-01", "end": "2019-03-01"},
    "model": {"gru_hidden": 4, "gat_hidden": 3},
    "train": {"epochs": 2, "record_time": False},
    "synthetic": {"n_nodes": 9},
}


def write_config(tmp_path, overrides=None, name="cfg.json"):
    doc = json.loads(json.dumps(BASE))
    for section, values in (overrides or {}).items():
        doc.setdefault(section, {}).update(values)
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def synth_dir(tmp_path):
    cfg = write_config(tmp_path)
    assert run("synth", "--config", cfg) == 0
    return tmp_path, cfg


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- synth


def test_synth_writes_consistent_dataset(synth_dir):
    tmp_path, _ = synth_dir
    out = tmp_path / "run"
    for name in ("nodes.csv", "edges.csv", "risk.csv", "params.csv", "summary.json",
                 "resolved_config.json"):
        assert (out / name).is_file()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["n_roads"] == 9 and summary["n_days"] == 60
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["train"]["lr"] == 1e-3 and resolved["window"]["T"] == 7


def test_synth_zero_rate_in_band(tmp_path):
    cfg = write_config(tmp_path, {"study_period": {"end": "2019-04-30"},
                                  "synthetic": {"n_nodes": 100,
                                                "groups": [{"pi": [0.9, 0.99], "n": [1, 3],
                                                            "p": [0.3, 0.6]}]}})
    assert run("synth", "--config", cfg) == 0
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["n_days"] == 120
    assert 0.90 <= summary["zero_rate"] <= 0.995


def test_synth_repeat_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    assert run("synth", "--config", cfg, "--out", tmp_path / "a") == 0
    assert run("synth", "--config", cfg, "--out", tmp_path / "b") == 0
    for name in ("nodes.csv", "edges.csv", "risk.csv", "params.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_synth_singleton(tmp_path):
    cfg = write_config(tmp_path, {"synthetic": {"n_nodes": 1}})
    assert run("synth", "--config", cfg) == 0
    assert len(read_csv(tmp_path / "run" / "risk.csv")) == 1


def test_synth_invalid_ranges(tmp_path):
    cfg = write_config(tmp_path, {"synthetic": {"groups": [{"pi": [0.9, 0.2], "n": [1, 2],
                                                            "p": [0.3, 0.4]}]}})
    assert run("synth", "--config", cfg) == 2
    assert not (tmp_path / "run").exists()


# ---------------------------------------------------------------- ingest


def ingest_inputs(tmp_path, accidents):
    (tmp_path / "nodes.csv").write_text("road_id,x,y\na,0,0\nb,100,0\nc,200,0\n")
    (tmp_path / "edges.csv").write_text("road_id_a,road_id_b\na,b\nb,c\n")
    (tmp_path / "acc.csv").write_text("date,road_id,x,y,severity\n" + accidents)
    return write_config(tmp_path, {"paths": {"nodes": "nodes.csv", "edges": "edges.csv",
                                             "accidents": "acc.csv"},
                                   "study_period": {"end": "2019-01-10"}})


def test_ingest(tmp_path):
    cfg = ingest_inputs(tmp_path, "2019-01-02,a,,,serious\n2019-01-05,,190,10,fatal\n")
    assert run("ingest", "--config", cfg) == 0
    rows = {r["road_id"]: r for r in read_csv(tmp_path / "run" / "risk.csv")}
    assert [rows[r]["2019-01-02"] for r in "abc"] == ["2", "1", "1"]
    assert [rows[r]["2019-01-05"] for r in "abc"] == ["1", "2", "3"]
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["n_accidents"] == 2
    assert summary["zero_rate"] == pytest.approx(24 / 30)


def test_ingest_empty_accidents(tmp_path):
    cfg = ingest_inputs(tmp_path, "")
    assert run("ingest", "--config", cfg) == 0
    summary = json.loads((tmp_path / "run" / "summary.json").read_text())
    assert summary["zero_rate"] == 1.0 and summary["total_risk"] == 0


def test_ingest_out_of_period_reports_line(tmp_path, caplog):
    cfg = ingest_inputs(tmp_path, "2019-01-02,a,,,slight\n2019-02-02,a,,,slight\n")
    assert run("ingest", "--config", cfg) == 2
    assert "acc.csv:3" in caplog.text
    assert not (tmp_path / "run").exists()


# ---------------------------------------------------------------- train / evaluate / predict


def test_train_all_heads_and_round_trip(synth_dir):
    tmp_path, cfg = synth_dir
    for head in ("zinb", "nb", "gauss"):
        assert run("train", "--config", cfg, "--head", head) == 0
        model, doc = load_checkpoint(tmp_path / "run" / f"checkpoint_{head}.json")
        assert model.config.head == head and doc["train_seed"] == 0
        rows = read_csv(tmp_path / "run" / f"history_{head}.csv")
        assert rows[0]["epoch"] == "0" and all(r["seconds"] == "0.0" for r in rows)


def test_train_history_bytes_repeat(synth_dir):
    tmp_path, cfg = synth_dir
    out = tmp_path / "run"
    assert run("train", "--config", cfg) == 0
    first = (out / "history_zinb.csv").read_bytes(), (out / "checkpoint_zinb.json").read_bytes()
    assert run("train", "--config", cfg) == 0
    assert first == ((out / "history_zinb.csv").read_bytes(),
                     (out / "checkpoint_zinb.json").read_bytes())


def test_evaluate_ha_only(synth_dir):
    tmp_path, cfg = synth_dir
    assert run("evaluate", "--config", cfg) == 0
    rows = list(csv.reader(open(tmp_path / "run" / "comparison.csv")))
    assert rows[0] == ["metric", "HA", "best"]
    assert [r[0] for r in rows[1:]] == ["mae", "mape", "rmse", "kld", "zr", "hr20"]


def test_evaluate_models_deterministic(synth_dir):
    tmp_path, cfg = synth_dir
    out = tmp_path / "run"
    assert run("train", "--config", cfg) == 0
    assert run("train", "--config", cfg, "--head", "gauss") == 0
    assert run("evaluate", "--config", cfg) == 0
    header = next(csv.reader(open(out / "comparison.csv")))
    assert header == ["metric", "STZINB", "STG", "HA", "best"]
    first = (out / "report_STZINB.json").read_bytes()
    report = json.loads(first)
    assert report["window"] == "Short(7-7)" and set(report) >= {"zr", "hr20_missing"}
    assert run("evaluate", "--config", cfg, "--checkpoint", out / "checkpoint_zinb.json") == 0
    assert (out / "report_STZINB.json").read_bytes() == first


def test_evaluate_rejects_foreign_checkpoint(synth_dir, tmp_path_factory):
    tmp_path, cfg = synth_dir
    assert run("train", "--config", cfg) == 0
    other = tmp_path_factory.mktemp("other")
    other_cfg = write_config(other, {"synthetic": {"n_nodes": 12}})
    assert run("synth", "--config", other_cfg) == 0
    assert run("evaluate", "--config", other_cfg, "--checkpoint",
               tmp_path / "run" / "checkpoint_zinb.json") == 2


def test_predict(synth_dir):
    tmp_path, cfg = synth_dir
    out = tmp_path / "run"
    assert run("train", "--config", cfg) == 0
    assert run("predict", "--config", cfg, "--checkpoint", out / "checkpoint_zinb.json",
               "--as-of", "2019-02-20") == 0
    rows = read_csv(out / "predictions_zinb.csv")
    assert list(rows[0]) == ["road_id", "day_offset", "mean", "lo90", "hi90", "p_zero", "entropy"]
    assert len(rows) == 9 * 7
    assert sorted({int(r["day_offset"]) for r in rows}) == list(range(1, 8))
    dump = json.loads((out / "predictions_zinb_params.json").read_text())["params"]
    q = dist.ZinbParams(np.array(dump["pi"]), np.array(dump["n"]), np.array(dump["p"]))
    means = np.array([float(r["mean"]) for r in rows]).reshape(9, 7)
    np.testing.assert_array_equal(means, dist.zinb_mean(q))
    assert all(int(r["lo90"]) <= int(r["hi90"]) for r in rows)


def test_predict_degenerate_checkpoint(synth_dir):
    tmp_path, cfg = synth_dir
    out = tmp_path / "run"
    assert run("train", "--config", cfg) == 0
    model, doc = load_checkpoint(out / "checkpoint_zinb.json")
    model.params["head.W"][...] = 0.0
    model.params["head.b"][2::3] = 50.0
    save_checkpoint(model, out / "degenerate.json", doc["node_hash"])
    assert run("predict", "--config", cfg, "--checkpoint", out / "degenerate.json",
               "--as-of", "2019-01-31") == 0
    rows = read_csv(out / "predictions_zinb.csv")
    assert all(float(r["mean"]) < 1e-6 for r in rows)
    assert all(r["lo90"] == "0" and r["hi90"] == "0" for r in rows)
    assert all(float(r["p_zero"]) > 0.999 for r in rows)


def test_predict_insufficient_history(synth_dir):
    tmp_path, cfg = synth_dir
    assert run("train", "--config", cfg) == 0
    ck = tmp_path / "run" / "checkpoint_zinb.json"
    assert run("predict", "--config", cfg, "--checkpoint", ck, "--as-of", "2019-01-03") == 2
    assert run("predict", "--config", cfg, "--checkpoint", ck, "--as-of", "2020-01-03") == 2
    assert run("predict", "--config", cfg, "--checkpoint", ck) == 2


# ---------------------------------------------------------------- validation and exit codes


@pytest.mark.parametrize("override", [
    {"window": {"label": "long", "T": 7}},
    {"window": {"label": "custom"}},
    {"train": {"lr": -1}},
    {"model": {"head": "poisson"}},
    {"loss": {"y0_form": "approximate"}},
    {"spillover": {"alpha1": 0.1, "alpha2": 0.5}},
    {"eval": {"top_frac": 0}},
    {"seeds": {"data_seed": -3}},
    {"split": {"train_frac": 0.9, "val_frac": 0.2}},
])
def test_invalid_config_exit_2_and_writes_nothing(tmp_path, override):
    cfg = write_config(tmp_path, override)
    assert run("synth", "--config", cfg) == 2
    assert not (tmp_path / "run").exists()


def test_unknown_key_and_bad_json(tmp_path):
    cfg = write_config(tmp_path, {"train": {"learning_rate": 0.1}})
    assert run("synth", "--config", cfg) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("synth", "--config", bad) == 2
    assert run("synth", "--config", tmp_path / "missing.json") == 2


def test_missing_inputs_exit_2(tmp_path):
    cfg = write_config(tmp_path)
    assert run("train", "--config", cfg) == 2


def test_unwritable_output_exit_4(tmp_path):
    cfg = write_config(tmp_path)
    (tmp_path / "blocker").write_text("")
    assert run("synth", "--config", cfg, "--out", tmp_path / "blocker" / "x") == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_3(synth_dir):
    tmp_path, cfg = synth_dir
    doc = json.loads(cfg.read_text())
    doc["train"].update(lr=1e300, clip_norm=1e300)
    cfg.write_text(json.dumps(doc))
    assert run("train", "--config", cfg) == 3


def test_thread_limit(synth_dir, monkeypatch):
    tmp_path, cfg = synth_dir
    monkeypatch.setenv("RISKGRAPH_THREADS", "1")
    assert run("evaluate", "--config", cfg) == 0
    monkeypatch.setenv("RISKGRAPH_THREADS", "many")
    assert run("evaluate", "--config", cfg) == 2


def test_long_window_preset(tmp_path):
    cfg = write_config(tmp_path, {"window": {"label": "long"}})
    assert run("synth", "--config", cfg) == 0
    assert run("train", "--config", cfg) == 0
    model, _ = load_checkpoint(tmp_path / "run" / "checkpoint_zinb.json")
    assert (model.config.T, model.config.k) == (14, 14)
