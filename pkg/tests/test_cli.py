import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from greybox_ot import cli, physics
from greybox_ot.utils import read_json


def run_cli(*argv):
    return cli.main(list(argv))


def test_simulate_writes_dataset_and_budget(tmp_path, capsys):
    out = tmp_path / "ds"
    assert run_cli("simulate", "--task", "pendulum", "--role", "target",
                   "--n", "12", "--seed", "7", "--out", str(out)) == 0
    captured = capsys.readouterr().out
    assert "calls consumed: 0" in captured
    ds = physics.load_dataset(out)
    assert ds.n == 12
    # deterministic target: manifest lists the fixed damping value
    manifest = read_json(out / "manifest.json")
    assert manifest["config"]["dgp"] == {"kind": "fixed", "value": 1.2}


def test_simulate_same_seed_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        run_cli("simulate", "--task", "pendulum", "--role", "source",
                "--n", "6", "--seed", "3", "--out", str(out))
    assert (a / "blocks.bin").read_bytes() == (b / "blocks.bin").read_bytes()


def test_simulate_empty_dataset(tmp_path):
    out = tmp_path / "empty"
    assert run_cli("simulate", "--task", "pendulum", "--role", "target",
                   "--n", "0", "--out", str(out)) == 0
    assert physics.load_dataset(out).n == 0


def test_simulate_two_point_dgp(tmp_path):
    out = tmp_path / "tp"
    assert run_cli("simulate", "--task", "pendulum", "--role", "test",
                   "--n", "4", "--dgp-kind", "two_point",
                   "--dgp-values", "0.7,1.4", "--out", str(out)) == 0
    ds = physics.load_dataset(out)
    assert ds.arrays["y"].shape == (4, 2, 50)


@pytest.fixture(scope="module")
def train_setup(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_train")
    cfg = {
        "task": "pendulum",
        "mode": "ot-gb",
        "budget": 640,
        "seed": 2,
        "batch_size": 32,
        "t_max": 4,
        "probe_size": 0,
        "convergence_window": 0,
        "target": {"n": 40, "seed": 9},
    }
    cfg_path = root / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    code = run_cli("train", "--config", str(cfg_path), "--out", str(root / "runs"))
    assert code == 0
    run_dir = next((root / "runs").iterdir())
    return root, cfg_path, run_dir


def test_train_artifacts(train_setup):
    root, cfg_path, run_dir = train_setup
    for f in ("history.csv", "run.json", "checkpoint-final/gen.bin",
              "checkpoint-final/manifest.json"):
        assert (run_dir / f).exists(), f
    run = read_json(run_dir / "run.json")
    assert run["stop_reason"] == "budget"
    assert run["config_fingerprint"] in run_dir.name


def test_train_rerun_is_idempotent(train_setup, capsys):
    root, cfg_path, run_dir = train_setup
    before = (run_dir / "history.csv").read_bytes()
    assert run_cli("train", "--config", str(cfg_path), "--out",
                   str(root / "runs")) == 0
    assert "already complete" in capsys.readouterr().out
    assert (run_dir / "history.csv").read_bytes() == before


def test_train_reproducible_across_dirs(train_setup, tmp_path):
    root, cfg_path, run_dir = train_setup
    assert run_cli("train", "--config", str(cfg_path), "--out", str(tmp_path)) == 0
    other = next(tmp_path.iterdir())
    assert (other / "history.csv").read_bytes() == \
           (run_dir / "history.csv").read_bytes()
    assert (other / "checkpoint-final/gen.bin").read_bytes() == \
           (run_dir / "checkpoint-final/gen.bin").read_bytes()


def test_train_unknown_key_rejected(tmp_path):
    cfg = {"task": "pendulum", "mode": "ot-gb", "budget": 100,
           "target": {"n": 5}, "learning_rate": 0.1}
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(cfg))
    assert run_cli("train", "--config", str(p), "--out", str(tmp_path)) == 2


def test_train_needs_exactly_one_target(tmp_path):
    cfg = {"task": "pendulum", "mode": "ot-gb", "budget": 100}
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(cfg))
    assert run_cli("train", "--config", str(p), "--out", str(tmp_path)) == 2


def test_train_wgan_bb_accepted(tmp_path):
    cfg = {"task": "pendulum", "mode": "wgan-bb", "budget": 128,
           "batch_size": 32, "t_max": 2, "probe_size": 0,
           "convergence_window": 0, "target": {"n": 20, "seed": 4}}
    p = tmp_path / "w.json"
    p.write_text(json.dumps(cfg))
    assert run_cli("train", "--config", str(p), "--out", str(tmp_path / "r")) == 0
    run_dir = next((tmp_path / "r").iterdir())
    manifest = read_json(run_dir / "checkpoint-final" / "manifest.json")
    assert manifest["arch_gen"]["family"] == "bb"
    assert manifest["config"]["mode"] == "wgan-bb"


def test_eval_and_mismatches(train_setup, tmp_path, capsys):
    root, cfg_path, run_dir = train_setup
    test_ds = tmp_path / "test_ds"
    run_cli("simulate", "--task", "pendulum", "--role", "test", "--n", "10",
            "--seed", "3", "--out", str(test_ds))
    report = tmp_path / "report.json"
    records = tmp_path / "records.csv"
    code = run_cli("eval", "--checkpoint", str(run_dir / "checkpoint-final"),
                   "--testset", str(test_ds), "--out", str(report),
                   "--bootstrap", "100", "--records-csv", str(records))
    assert code == 0
    out = capsys.readouterr().out
    assert "nrmse" in out
    rep = read_json(report)
    assert rep["task"] == "pendulum"
    assert len(records.read_text().strip().splitlines()) == 11
    # task mismatch -> config error
    adv = tmp_path / "adv"
    run_cli("simulate", "--task", "advdiff", "--role", "test", "--n", "5",
            "--out", str(adv))
    assert run_cli("eval", "--checkpoint", str(run_dir / "checkpoint-final"),
                   "--testset", str(adv), "--out", str(report)) == 2


def test_export_csv_and_svg(tmp_path):
    pend = tmp_path / "pend"
    run_cli("simulate", "--task", "pendulum", "--role", "target", "--n", "3",
            "--out", str(pend))
    csv_path = tmp_path / "traj.csv"
    assert run_cli("export", "--input", str(pend), "--format", "csv",
                   "--out", str(csv_path)) == 0
    assert len(csv_path.read_text().strip().splitlines()) == 51
    svg_path = tmp_path / "traj.svg"
    assert run_cli("export", "--input", str(pend), "--format", "svg",
                   "--out", str(svg_path)) == 0
    ET.parse(svg_path)  # well-formed XML

    adv = tmp_path / "adv"
    run_cli("simulate", "--task", "advdiff", "--role", "source", "--n", "2",
            "--out", str(adv))
    csv2 = tmp_path / "adv.csv"
    assert run_cli("export", "--input", str(adv), "--format", "csv",
                   "--out", str(csv2), "--index", "1") == 0
    lines = csv2.read_text().strip().splitlines()
    assert len(lines) == 51 and len(lines[1].split(",")) == 21
    svg2 = tmp_path / "adv.svg"
    assert run_cli("export", "--input", str(adv), "--format", "svg",
                   "--out", str(svg2)) == 0
    ET.parse(svg2)


def test_export_reactdiff_svg(tmp_path):
    rd = tmp_path / "rd"
    run_cli("simulate", "--task", "reactdiff", "--role", "target", "--n", "1",
            "--out", str(rd))
    svg = tmp_path / "rd.svg"
    assert run_cli("export", "--input", str(rd), "--format", "svg",
                   "--out", str(svg)) == 0
    ET.parse(svg)


def test_missing_input_is_config_error(tmp_path):
    assert run_cli("export", "--input", str(tmp_path / "nope"), "--format",
                   "csv", "--out", str(tmp_path / "x.csv")) == 2
