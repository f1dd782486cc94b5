"""CLI verbs end to end: run, sweep, validate, report; flag parsing."""
import json
from pathlib import Path

import pytest

from protostream.cli import main, parse_seeds, parse_values

TINY_TOML = """
[dataset]
name = "tiny"
kind = "synthetic"
n_classes = 4
channels = 2
timesteps = 4
train_per_class = 30
test_per_class = 15
mean_scale = 2.0
seed = 3

[split]
n_base = 2

[pretrain]
epochs = 2
batch_size = 60

[continual]
batch_size = 10
eval_stride = 5
learning_rate = 0.01

[encoder]
embedding_dim = 4
hidden = [8]

[experiment]
methods = ["lapnet", "online"]
seeds = [1]
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "exp.toml"
    path.write_text(TINY_TOML)
    return path


def test_parse_seeds_forms():
    assert parse_seeds("3") == [3]
    assert parse_seeds("1,2,5") == [1, 2, 5]
    assert parse_seeds("1..5") == [1, 2, 3, 4, 5]
    assert parse_values("0.2,1,2,3") == [0.2, 1.0, 2.0, 3.0]


def test_run_verb(tiny_config, tmp_path, capsys):
    out = tmp_path / "results"
    code = main(["run", "--config", str(tiny_config), "--output-dir", str(out)])
    assert code == 0
    assert (out / "summary.csv").exists()
    rows = (out / "summary.csv").read_text().splitlines()
    assert len(rows) == 3  # header + 2 methods x 1 dataset
    assert "wrote" in capsys.readouterr().out


def test_run_verb_flag_overrides(tiny_config, tmp_path):
    out = tmp_path / "results"
    code = main(["run", "--config", str(tiny_config), "--output-dir", str(out),
                 "--methods", "online", "--seeds", "1..2", "--eval-stride", "2"])
    assert code == 0
    data = json.loads((out / "runs.json").read_text())
    assert data["methods"] == ["online"]
    assert sorted(r["seed"] for r in data["runs"]) == [1, 2]
    steps = [json.loads(line) for line in
             (out / "tiny" / "online" / "seed_1" / "steps.jsonl").read_text().splitlines()]
    evals = [r["step"] for r in steps]
    assert all(s % 2 == 0 or s == evals[-1] for s in evals)


def test_run_unknown_dataset_flag_errors(tiny_config, tmp_path):
    code = main(["run", "--config", str(tiny_config), "--dataset", "nope",
                 "--output-dir", str(tmp_path / "o")])
    assert code == 2


def test_sweep_verb(tiny_config, tmp_path):
    out = tmp_path / "sweep"
    code = main(["sweep", "--config", str(tiny_config), "--param", "refresh_ratio",
                 "--values", "0,0.5,1.0", "--output-dir", str(out), "--seeds", "1"])
    assert code == 0
    lines = (out / "sweep_refresh_ratio.csv").read_text().splitlines()
    assert len(lines) == 4


def test_validate_default_config_ok(capsys):
    assert main(["validate"]) == 0
    assert "no violations" in capsys.readouterr().out


def test_validate_reports_violations(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[continual]\nrefresh_ratio = 1.5\nadapt_on = true\nreplay_on = false\n")
    assert main(["validate", "--config", str(bad)]) == 1
    out = capsys.readouterr().out
    assert "refresh_ratio" in out
    assert "adapt_on requires replay_on" in out


def test_report_verb_rebuilds_summary(tiny_config, tmp_path, capsys):
    out = tmp_path / "results"
    main(["run", "--config", str(tiny_config), "--output-dir", str(out)])
    original = (out / "summary.csv").read_bytes()
    (out / "summary.csv").unlink()
    assert main(["report", "--output-dir", str(out)]) == 0
    assert (out / "summary.csv").read_bytes() == original


def test_report_missing_dir_errors(tmp_path):
    assert main(["report", "--output-dir", str(tmp_path / "missing")]) == 2


def test_output_dir_env_default(tiny_config, tmp_path, monkeypatch):
    monkeypatch.setenv("PROTOSTREAM_OUTPUT", str(tmp_path / "envout"))
    code = main(["run", "--config", str(tiny_config), "--seeds", "1",
                 "--methods", "online"])
    assert code == 0
    assert (tmp_path / "envout" / "summary.csv").exists()
