import csv
import json
from pathlib import Path

import pytest

from proxyselect.cli import COMMANDS, build_parser, main
from proxyselect.trainer import RunConfig

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def config_file(tmp_path, small_data_ref):
    cfg = RunConfig(data=small_data_ref, hidden_units=8).with_hyper(epochs=5, batch_size=32)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return path


def help_text(command):
    parser = build_parser()
    if command is None:
        return parser.format_help()
    sub = next(a for a in parser._actions if a.dest == "command")
    return sub.choices[command].format_help()


@pytest.mark.parametrize("command", [None, *COMMANDS])
def test_help_matches_golden(command):
    name = "help_main.txt" if command is None else f"help_{command}.txt"
    assert help_text(command) == (GOLDEN / name).read_text()


@pytest.mark.parametrize("command", list(COMMANDS))
def test_every_command_has_common_flags(command):
    text = help_text(command)
    for flag in ("--config", "--seed", "--out-dir"):
        assert flag in text


def test_unknown_command_and_flag_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["train", "--bogus"])
    assert info.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_config_error_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"hyper": {"learning_rate": -1}}))
    assert main(["train", "--config", str(bad), "--out-dir", str(tmp_path)]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err == {"error": "config", "field": "hyper.learning_rate", "message": "out of range: -1"}


def test_schedule_dump_static(tmp_path):
    assert main(["schedule-dump", "--schedule", "static", "--ratio", "0.5", "--n", "100", "--epochs", "10",
                 "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "schedule.csv")))
    assert len(rows) == 10 and {r["m"] for r in rows} == {"50"}


def test_train_outputs_and_echo(tmp_path, config_file):
    out = tmp_path / "run"
    assert main(["train", "--config", str(config_file), "--ratio", "0.4", "--seed", "5", "--out-dir", str(out)]) == 0
    for name in ("run.json", "run_epochs.csv", "run_timing.csv", "config.json", "model.npz", "memory.csv"):
        assert (out / name).exists()
    echo = RunConfig.from_dict(json.loads((out / "config.json").read_text()))
    assert echo.ratio == 0.4 and echo.seed == 5
    assert json.loads((out / "overrides.json").read_text()) == {"ratio": 0.4, "seed": 5}
    assert json.loads((out / "run.json").read_text())["config"] == echo.to_dict()


def test_train_degenerate_budget(tmp_path, config_file):
    finals = []
    for mode in ("asp", "full"):
        out = tmp_path / mode
        assert main(["train", "--config", str(config_file), "--ratio", "1.0", "--mode", mode,
                     "--out-dir", str(out)]) == 0
        finals.append(json.loads((out / "run.json").read_text())["final"])
    assert finals[0] == finals[1]


def test_train_is_byte_reproducible(tmp_path, config_file):
    for name in ("a", "b"):
        assert main(["train", "--config", str(config_file), "--ratio", "0.3", "--out-dir", str(tmp_path / name)]) == 0
    for name in ("run.json", "run_epochs.csv", "config.json", "memory.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_hardness_outputs(tmp_path, config_file):
    assert main(["hardness", "--config", str(config_file), "--ratio", "0.5", "--top-k", "3",
                 "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "hardness.csv")))
    assert len(rows) == 192
    means = [float(r["mean_importance"]) for r in rows]
    assert means == sorted(means, reverse=True)
    assert [r["group"] for r in rows[:3]] == ["hardest"] * 3
    assert [r["group"] for r in rows[-3:]] == ["easiest"] * 3
    traces = list(csv.DictReader(open(tmp_path / "traces.csv")))
    assert len(traces) == 5 * 192
    assert sum(int(t["active"]) for t in traces if t["epoch"] == "0") == 192


def test_generate_data(tmp_path, config_file):
    assert main(["generate-data", "--config", str(config_file), "--out-dir", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "metadata.json").read_text())
    assert meta["source"] == "synthetic" and len(meta["flipped"]) == 12
    assert sum(1 for _ in open(tmp_path / "dataset.csv")) == 241


def test_grid_and_correlate(tmp_path, config_file, monkeypatch):
    import proxyselect.analysis as analysis

    monkeypatch.setattr(analysis, "DEFAULT_LATTICE", {"learning_rate": (0.05, 0.1, 0.2)})
    out = tmp_path / "grid"
    assert main(["grid", "--config", str(config_file), "--ratios", "0.5", "--seeds", "0",
                 "--out-dir", str(out)]) == 0
    assert (out / "grid.json").exists() and (out / "correlation.csv").exists()
    assert len(list((out / "cache").glob("*.json"))) == 6

    # a grid where every proxy accuracy equals the full one correlates perfectly
    grid = json.loads((out / "grid.json").read_text())
    grid["accuracy"]["0.5"] = [0.3, 0.5, 0.4]
    grid["accuracy"]["1.0"] = [0.3, 0.5, 0.4]
    (out / "grid_eq.json").write_text(json.dumps(grid))
    assert main(["correlate", "--grid", str(out / "grid_eq.json"), "--out-dir", str(tmp_path / "corr")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "corr" / "correlation.csv")))
    assert {(r["kendall_tau"], r["pearson"], r["spearman"]) for r in rows} == {("1.0", "1.0", "1.0")}
