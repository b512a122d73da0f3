import json
import os

import pytest

from hierdrive.cli import main

TINY_FLAGS = ["--epochs", "2", "--k", "3", "--m", "2", "--d", "16", "--batch-size", "4"]


def _run(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_gen_data_line_count(tmp_path, capsys):
    out = tmp_path / "d.scenes"
    code, stdout, _ = _run(["gen-data", "--seeds", "0..100", "--out", str(out)], capsys)
    assert code == 0
    assert len(out.read_text().strip().split("\n")) == 100
    assert (tmp_path / "d.scenes.config.txt").exists()


def test_gen_data_split_outputs(tmp_path, capsys):
    code, _, _ = _run([
        "gen-data", "--seeds", "0..20",
        "--mix", "lane_keep=2,three_point_turn=0.4",
        "--train-out", str(tmp_path / "tr.scenes"),
        "--val-out", str(tmp_path / "va.scenes"),
        "--split", "0.8,0.2",
    ], capsys)
    assert code == 0
    train = (tmp_path / "tr.scenes").read_text()
    assert "three_point_turn" not in train
    assert len(train.strip().split("\n")) == 16


def test_usage_errors_exit_2(tmp_path, capsys):
    code, _, _ = _run(["gen-data", "--seeds", "oops", "--out", str(tmp_path / "x")], capsys)
    assert code == 2
    code, _, _ = _run(["gen-data", "--seeds", "0..4"], capsys)  # no output flag
    assert code == 2
    code, _, _ = _run(["bogus-command"], capsys)
    assert code == 2


def test_missing_data_exits_3(tmp_path, capsys):
    code, _, err = _run([
        "train", "--data", str(tmp_path / "missing.scenes"),
        "--ckpt", str(tmp_path / "m.ckpt"), *TINY_FLAGS,
    ], capsys)
    assert code == 3
    assert "missing.scenes" in err


def test_pipeline_train_eval_infer_plot(tmp_path, capsys):
    data = tmp_path / "d.scenes"
    ckpt = tmp_path / "m.ckpt"
    code, _, _ = _run(["gen-data", "--seeds", "0..8", "--out", str(data)], capsys)
    assert code == 0
    code, _, _ = _run([
        "train", "--data", str(data), "--ckpt", str(ckpt), "--quiet", *TINY_FLAGS,
    ], capsys)
    assert code == 0
    assert ckpt.exists()
    assert (tmp_path / "m.ckpt.config.txt").exists()

    report = tmp_path / "open.jsonl"
    code, stdout, _ = _run([
        "eval-open", "--ckpt", str(ckpt), "--data", str(data), "--report", str(report),
    ], capsys)
    assert code == 0
    lines = report.read_text().strip().split("\n")
    assert len(lines) == 9  # 8 scenes + aggregate
    assert json.loads(lines[-1])["aggregate"] is True

    code, out1, _ = _run([
        "infer", "--ckpt", str(ckpt), "--data", str(data), "--index", "1",
        "--mode", "dual_sample", "--temperature", "0.5", "--seed", "7",
    ], capsys)
    assert code == 0
    code, out2, _ = _run([
        "infer", "--ckpt", str(ckpt), "--data", str(data), "--index", "1",
        "--mode", "dual_sample", "--temperature", "0.5", "--seed", "7",
    ], capsys)
    assert code == 0
    assert out1 == out2  # seeded determinism
    record = json.loads(out1)
    assert len(record["trajectory"]) == 6

    closed = tmp_path / "closed.jsonl"
    code, _, _ = _run([
        "eval-closed", "--ckpt", str(ckpt), "--scenario", "lane_keep",
        "--seeds", "0..2", "--budget", "6", "--report", str(closed),
    ], capsys)
    assert code == 0
    assert len(closed.read_text().strip().split("\n")) == 3

    plots = tmp_path / "plots"
    code, _, _ = _run([
        "plot", "--ckpt", str(ckpt), "--data", str(data), "--limit", "2",
        "--out-dir", str(plots),
    ], capsys)
    assert code == 0
    svgs = sorted(plots.glob("*.svg"))
    assert len(svgs) == 2
    assert svgs[0].read_text().startswith("<?xml")


def test_bad_checkpoint_exits_3(tmp_path, capsys):
    data = tmp_path / "d.scenes"
    _run(["gen-data", "--seeds", "0..2", "--out", str(data)], capsys)
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    code, _, err = _run([
        "eval-open", "--ckpt", str(bad), "--data", str(data), "--report", str(tmp_path / "r"),
    ], capsys)
    assert code == 3


def test_infer_unknown_scene_id_exits_3(tmp_path, capsys):
    data = tmp_path / "d.scenes"
    ckpt = tmp_path / "m.ckpt"
    _run(["gen-data", "--seeds", "0..4", "--out", str(data)], capsys)
    _run(["train", "--data", str(data), "--ckpt", str(ckpt), "--quiet", *TINY_FLAGS], capsys)
    code, _, err = _run([
        "infer", "--ckpt", str(ckpt), "--data", str(data), "--id", "nope-000000",
    ], capsys)
    assert code == 3
    assert "nope-000000" in err


def test_env_output_root(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("HIERDRIVE_OUT", str(tmp_path / "root"))
    code, _, _ = _run(["gen-data", "--seeds", "0..2", "--out", "rel.scenes"], capsys)
    assert code == 0
    assert (tmp_path / "root" / "rel.scenes").exists()


def test_config_file_precedence(tmp_path, capsys):
    data = tmp_path / "d.scenes"
    _run(["gen-data", "--seeds", "0..4", "--out", str(data)], capsys)
    cfg_file = tmp_path / "train.cfg"
    cfg_file.write_text("epochs=1\nk_anchors=3\nm_modes=2\ndim=16\nbatch_size=4\n")
    ckpt = tmp_path / "m.ckpt"
    code, _, _ = _run([
        "train", "--data", str(data), "--ckpt", str(ckpt), "--quiet",
        "--config", str(cfg_file), "--epochs", "2",
    ], capsys)
    assert code == 0
    text = (tmp_path / "m.ckpt.config.txt").read_text()
    assert "epochs=2" in text  # flag wins over file
    assert "dim=16" in text
