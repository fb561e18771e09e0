import csv
import json

import pytest

from netmeter import cli, pipeline
from netmeter.config import DEFAULTS, ConfigError, RunConfig, load_config
from netmeter.nn import TrainingDivergence

TINY = [
    "synth.n_customers=2",
    "synth.n_days=30",
    "synth.n_locations=1",
    'train.baselines=["CnnGru"]',
    "train.epochs_stage1=1",
    "train.epochs_stage2=1",
    "train.epochs_stage3=1",
    "train.epochs_cnngru=1",
]


def _sets(pairs):
    out = []
    for p in pairs:
        out += ["--set", p]
    return out


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_help_lists_every_key(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["e2e", "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    for section, keys in DEFAULTS.items():
        if isinstance(keys, dict):
            for key in keys:
                assert f"{section}.{key}" in text
        else:
            assert section in text
    assert "synth.n_customers         31" in text


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(None, ["synth.bogus=1"])
    with pytest.raises(ConfigError):
        load_config(None, ["synth.n_days=ten"])
    bad = tmp_path / "bad.toml"
    bad.write_text("[nosuch]\nx = 1\n")
    with pytest.raises(ConfigError):
        load_config(bad, [])
    assert cli.main(["synth", "--set", "synth.bogus=1", "--run-dir", str(tmp_path / "r")]) == 1


def test_unknown_subcommand_exits_1():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 1


def test_toml_round_trip_and_hash(tmp_path):
    cfg = load_config(None, ["seed=4", "attack2.alpha=0.25"])
    path = tmp_path / "c.toml"
    path.write_text(cfg.to_toml())
    back = load_config(path, [])
    assert back.to_dict() == cfg.to_dict() and back.hash == cfg.hash
    assert cfg.with_overrides(["paths.out_dir='/elsewhere'"]).hash == cfg.hash
    assert cfg.with_overrides(["seed=5"]).hash != cfg.hash
    assert RunConfig(0, {}).attack_params()[2].alpha == 0.5


def test_default_run_dir_is_stamped(tmp_path):
    args = _sets(TINY + [f"paths.out_dir='{tmp_path}'"])
    assert cli.main(["synth", *args]) == 0
    cfg = load_config(None, TINY + [f"paths.out_dir='{tmp_path}'"])
    assert (tmp_path / f"run-{cfg.hash}" / "meter.csv").exists()


def test_attack_four_per_benign_day(tmp_path):
    run = str(tmp_path)
    args = _sets(["synth.n_customers=1", "synth.n_days=100", "synth.n_locations=1"]) + ["--run-dir", run]
    assert cli.main(["synth", *args]) == 0
    assert cli.main(["ingest", *args]) == 0
    assert len(_rows(tmp_path / "days.csv")) == 100
    before = (tmp_path / "days.csv").read_bytes()
    assert cli.main(["attack", *args]) == 0
    rows = _rows(tmp_path / "malicious.csv")
    assert len(rows) == 400
    assert sorted({r["attack_id"] for r in rows}) == ["1", "2", "3", "4"]
    assert (tmp_path / "days.csv").read_bytes() == before


def test_prep_balances_classes(tmp_path):
    args = _sets(TINY) + ["--run-dir", str(tmp_path)]
    for cmd in ("synth", "ingest", "attack", "prep"):
        assert cli.main([cmd, *args]) == 0
    report = json.loads((tmp_path / "prep_report.json").read_text())
    before = report["train_before_balancing"]
    assert before["Malicious"] == 4 * before["Benign"]
    assert report["train"]["Benign"] == report["train"]["Malicious"]
    labels = [r["label"] for r in _rows(tmp_path / "train.csv")]
    assert labels.count("Benign") == labels.count("Malicious")


def test_e2e_tiny_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        args = _sets(TINY) + ["--seed", "7", "--run-dir", str(tmp_path / name)]
        assert cli.main(["e2e", *args]) == 0
        outs.append((tmp_path / name / "metrics.json").read_bytes())
    assert outs[0] == outs[1]
    run = tmp_path / "a"
    for name in ("summary.md", "roc.svg", "pr.svg", "roc.csv", "pr.csv", "curves.csv", "config.toml", "scores.csv"):
        assert (run / name).exists(), name
    metrics = json.loads(outs[0])
    assert {"Stage 1", "Stage 2", "Stage 3", "CnnGru", "_meta"} <= set(metrics)
    for model in ("Stage 3", "CnnGru"):
        m = metrics[model]
        assert abs(m["hd"] - (m["dr"] - m["fa"])) <= 1e-12
    # predict and analyze work on the finished run
    out = tmp_path / "pred.csv"
    assert cli.main(["predict", str(run / "test.csv"), "--out", str(out), "--run-dir", str(run)]) == 0
    assert len(_rows(out)) == len(_rows(run / "test.csv"))
    assert cli.main(["analyze", "--max-lag", "30", *_sets(TINY), "--run-dir", str(run)]) == 0
    assert (run / "acf.csv").exists() and (run / "corr.csv").exists()


def test_exit_code_data_error(tmp_path):
    assert cli.main(["ingest", "--run-dir", str(tmp_path)]) == 2
    assert cli.main(["train", "--run-dir", str(tmp_path)]) == 2
    (tmp_path / "meter.csv").write_text("not,a,meter,file\n")
    assert cli.main(["ingest", "--run-dir", str(tmp_path)]) == 2


def test_exit_code_divergence(tmp_path, monkeypatch):
    def boom(*a, **kw):
        raise TrainingDivergence("loss became nan")

    monkeypatch.setattr(pipeline, "run_train", boom)
    assert cli.main(["train", "--run-dir", str(tmp_path)]) == 3
