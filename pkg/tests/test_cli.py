import json

import pytest

from conftest import SMALL_CFG
from futureplan.checkpoint import load_checkpoint
from futureplan.cli import main
from futureplan.config import dump_config
from futureplan.world.dataset import load_dataset


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--scenarios", "straight-follow,merge", "--episodes", "12", "--seed", "3",
                 "--out", str(d / "data.fpd")]) == 0
    (d / "cfg.txt").write_text(dump_config(SMALL_CFG.replace(steps=4, warmup_steps=1, holdout=0.25)))
    return d


def test_gen_data_byte_identical(workdir, tmp_path):
    assert main(["gen-data", "--scenarios", "straight-follow,merge", "--episodes", "12", "--seed", "3",
                 "--out", str(tmp_path / "again.fpd")]) == 0
    assert (tmp_path / "again.fpd").read_bytes() == (workdir / "data.fpd").read_bytes()
    assert len(load_dataset(workdir / "data.fpd")) == 12


def test_gen_data_zero_episodes(tmp_path):
    assert main(["gen-data", "--episodes", "0", "--out", str(tmp_path / "e.fpd")]) == 0
    assert len(load_dataset(tmp_path / "e.fpd")) == 0


@pytest.mark.parametrize("argv", [
    ["gen-data", "--scenarios", "teleport", "--episodes", "3", "--out", "x.fpd"],
    ["gen-data", "--episodes", "-1", "--out", "x.fpd"],
    ["gen-data"],
    ["frobnicate"],
    ["eval", "--mode", "open", "--policy", "oracle", "--out", "x.json"],
])
def test_usage_errors(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2
    if argv[0] == "gen-data" and "teleport" in argv:
        assert "straight-follow" in capsys.readouterr().err


def test_train_eval_resume(workdir, tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--config", str(workdir / "cfg.txt"), "--data", str(workdir / "data.fpd"),
                 "--out", str(out), "--seed", "2"]) == 0
    ck = load_checkpoint(out / "model.ckpt")
    assert ck.step == 4 and ck.model.cfg.seed == 2
    assert len((out / "train_log.jsonl").read_text().splitlines()) == 4

    assert main(["eval", "--checkpoint", str(out / "model.ckpt"), "--mode", "open", "--data",
                 str(workdir / "data.fpd"), "--template-check", "--out", str(tmp_path / "m.json")]) == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["schema_version"] == 1 and doc["open_loop"]["episodes"] == 12
    assert 0.0 <= doc["template_emission_rate"] <= 1.0

    # resuming a finished run with a longer schedule continues the step counter
    longer = tmp_path / "cfg8.txt"
    longer.write_text(dump_config(ck.model.cfg.replace(steps=6)))
    assert main(["train", "--config", str(longer), "--data", str(workdir / "data.fpd"), "--out", str(tmp_path / "r"),
                 "--checkpoint", str(out / "model.ckpt")]) == 0
    assert load_checkpoint(tmp_path / "r" / "model.ckpt").step == 6


def test_eval_closed_oracle(tmp_path):
    out = tmp_path / "c.json"
    assert main(["eval", "--mode", "closed", "--policy", "oracle", "--scenarios",
                 "straight-follow,static-obstacle-overtake,merge,unprotected-turn", "--episodes", "4",
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["closed_loop"]["success_rate"] == 1.0 and len(doc["closed_loop"]["runs"]) == 4


def test_invalid_checkpoint_exit_code(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["eval", "--checkpoint", str(bad), "--mode", "closed", "--out", str(tmp_path / "o.json")]) == 3
    assert main(["bench-decode", "--checkpoint", str(tmp_path / "missing.ckpt"), "--out",
                 str(tmp_path / "b.json")]) == 3


def test_bench_decode_cli(workdir, tmp_path):
    out = tmp_path / "bench.json"
    assert main(["bench-decode", "--config", str(workdir / "cfg.txt"), "--reps", "3", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["reps"] == 3 and doc["ar_over_prefill"] > 0


def test_ablate_cli(workdir, tmp_path):
    out = tmp_path / "table.csv"
    assert main(["ablate", "--config", str(workdir / "cfg.txt"), "--data", str(workdir / "data.fpd"),
                 "--variant", "m_base,full", "--num-seeds", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "variant,seed,metric,value"
    assert any(l.startswith("full,mean,") for l in lines) and any(l.startswith("m_base,0,") for l in lines)
    assert main(["ablate", "--data", str(workdir / "data.fpd"), "--variant", "nope", "--out", str(out)]) == 2
