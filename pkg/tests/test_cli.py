"""Exercises the command-line interface through main(argv)."""

import numpy as np
import pytest

from codicon import pacmen
from codicon.cli import main
from codicon.params_io import save_scripted

SMALL_INI = """\
[run]
iterations = 2
episodes_per_iter = 2

[policy]
policy_hidden = 8

[critic]
critic_hidden = 8

[ranking]
ranking_hidden = 8
"""


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_INI)
    return path


@pytest.fixture
def scripted_params(tmp_path):
    path = tmp_path / "scripted.bin"
    save_scripted(path, pacmen.scripted_optimal_actions(), meta={"label": "optimal"})
    return path


def test_train_smoke(small_config, tmp_path, capsys):
    rc = main([
        "train", "--config", str(small_config), "--out", str(tmp_path / "runs"),
        "--seed", "3",
    ])
    assert rc == 0
    out = capsys.readouterr().out
    assert "run complete" in out
    run_dir = tmp_path / "runs" / "codicon-s3"
    assert (run_dir / "params.bin").exists()
    assert (run_dir / "metrics.csv").exists()


def test_train_variant_and_overrides(small_config, tmp_path, capsys):
    rc = main([
        "train", "--config", str(small_config), "--out", str(tmp_path / "runs"),
        "--variant", "mappo", "--iterations", "1", "--lambda", "0.9",
    ])
    assert rc == 0
    run_dir = tmp_path / "runs" / "mappo-s0"
    # the variant's meaning wins over the explicit flag
    assert "lambda = 0.0" in (run_dir / "config.ini").read_text()


def test_train_missing_config(tmp_path, capsys):
    rc = main(["train", "--config", str(tmp_path / "nope.ini")])
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_train_invalid_override(small_config, tmp_path, capsys):
    rc = main([
        "train", "--config", str(small_config), "--out", str(tmp_path / "runs"),
        "--lambda", "-1",
    ])
    assert rc == 2
    assert "lambda" in capsys.readouterr().err


def test_eval_scripted_reaches_known_optimum(scripted_params, capsys):
    rc = main(["eval", "--params", str(scripted_params), "--episodes", "3", "--seed", "0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "mean return" in out
    assert "22.75" in out


def test_eval_missing_params(tmp_path, capsys):
    rc = main(["eval", "--params", str(tmp_path / "ghost.bin"), "--episodes", "1", "--seed", "0"])
    assert rc == 2
    assert "no such parameter file" in capsys.readouterr().err


def test_eval_corrupt_params(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"GARBAGE!" * 4)
    rc = main(["eval", "--params", str(bad), "--episodes", "1", "--seed", "0"])
    assert rc == 2


def test_eval_trained_params(small_config, tmp_path, capsys):
    assert main([
        "train", "--config", str(small_config), "--out", str(tmp_path / "runs"),
        "--iterations", "1",
    ]) == 0
    capsys.readouterr()
    rc = main([
        "eval", "--params", str(tmp_path / "runs" / "codicon-s0" / "params.bin"),
        "--episodes", "2", "--seed", "1",
    ])
    assert rc == 0
    assert "mean return" in capsys.readouterr().out


def test_dump_scripted(scripted_params, tmp_path, capsys):
    out_csv = tmp_path / "d.csv"
    rc = main([
        "dump", "--params", str(scripted_params), "--episodes", "2", "--seed", "0",
        "--out", str(out_csv),
    ])
    assert rc == 0
    assert f"wrote 34 rows" in capsys.readouterr().out
    rows = out_csv.read_text().strip().splitlines()
    assert rows[0].split(",")[-1] == "reward"
    assert len(rows) == 1 + 2 * 17
    # the scripted run sweeps dots, so some steps net a positive reward
    rewards = np.array([float(r.split(",")[-1]) for r in rows[1:]])
    assert rewards.max() > 0
    assert np.isclose(rewards[:17].sum(), pacmen.OPTIMAL_RETURN)
