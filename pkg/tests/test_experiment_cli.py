import configparser
import io
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from mastersample import experiment
from mastersample.checkpoint import CheckpointError
from mastersample.cli import main
from mastersample.config import load_config
from mastersample.coverage import CoverageSearchError
from mastersample.experiment import ExperimentError, recompute_summary, resume, run_dir, run_experiment

SMALL = """
[world]
latent_dim = 16
embedding_dim = 8
hidden_dim = 16
n_identities = 60
cluster_count = 4
n_impostor_pairs = 400
[optimizer]
names = lmmaes, lmmaes+predictor, random
[predictor]
oversample = 60
capacity = 200
hidden = 16, 8
warmup_fraction = 0.2
[experiment]
budget = 360
seeds = 0, 1
checkpoint_every = 7
"""


def ini(extra=""):
    """SMALL with the sections of ``extra`` merged over it."""
    parser = configparser.ConfigParser(strict=False)
    parser.read_string(SMALL + extra)
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def small(extra="", seed=0):
    return load_config(text=ini(extra), root_seed=seed)


class Interrupt(KeyboardInterrupt):
    pass


def test_rerun_gives_byte_identical_summary(tmp_path, capsys):
    run_experiment(small(), tmp_path / "a")
    run_experiment(small(), tmp_path / "b")
    a, b = (tmp_path / "a" / "summary.csv").read_bytes(), (tmp_path / "b" / "summary.csv").read_bytes()
    assert a == b
    assert a.decode().splitlines()[0].startswith("mode,optimizer,masters,train_msc,test_msc")
    assert "lmmaes+predictor" in capsys.readouterr().out


def test_artifacts_on_disk(tmp_path):
    out = tmp_path / "r"
    run_experiment(small(), out)
    assert json.loads((out / "status.json").read_text()) == {"status": "complete"}
    assert load_config(out / "config.ini") == small()
    split = json.loads((out / "split.json").read_text())
    assert len(split["train"]) == 60 * 4038 // 5749
    d = run_dir(out, "single", "lmmaes+predictor", 0, 1)
    res = json.loads((d / "result.json").read_text())
    # λ = 4 + floor(3 ln 16) = 12, so 360 evaluations are exactly 30 generations
    assert res["evaluations"] == 360 and res["iterations"] == 30
    trace = (d / "trace.ndjson").read_text().splitlines()
    assert len(trace) == res["iterations"]
    assert not (d / "checkpoint.npz").exists()
    assert (out / "coverage" / "lmmaes_predictor.ndjson").exists()


def test_different_config_refused(tmp_path):
    run_experiment(small(), tmp_path)
    with pytest.raises(ExperimentError):
        run_experiment(small(seed=1), tmp_path)


def test_summary_recomputes_from_latents(tmp_path):
    cfg = small("[coverage]\nmode = greedy\nmax_iter = 3\n")
    run_experiment(cfg, tmp_path)
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    header = lines[0].split(",")
    stored = [dict(zip(header, line.split(","))) for line in lines[1:]]
    again = recompute_summary(tmp_path)
    assert [(r["optimizer"], r["train_msc"], r["test_msc"]) for r in stored] == \
           [(r["optimizer"], r["train_msc"], r["test_msc"]) for r in again]


def test_clustered_and_combined_modes_run(tmp_path):
    run_experiment(small("[coverage]\nmode = clustered\nclusters = 3\n[optimizer]\nnames = random\n"), tmp_path / "c")
    cfg = small("[coverage]\nmode = combined\nmax_iter = 2\n[threshold]\npolicy = combined_grid\ngrid_resolution = 25\n"
                "[optimizer]\nnames = lmmaes\n")
    run_experiment(cfg, tmp_path / "m")
    th = json.loads((tmp_path / "m" / "thresholds.json").read_text())
    assert len(th["thresholds"]) == 2
    assert len(json.loads((tmp_path / "m" / "world.json").read_text())["models"]) == 2
    rec = recompute_summary(tmp_path / "m")
    row = (tmp_path / "m" / "summary.csv").read_text().splitlines()[1].split(",")
    assert rec[0]["train_msc"] == row[3]


def _interrupted(tmp_path, monkeypatch, cfg, after):
    """Run until ``after`` checkpoints have been written, then raise."""
    calls = {"n": 0}
    real = experiment.save_checkpoint

    def flaky(path, payload):
        real(path, payload)
        calls["n"] += 1
        if calls["n"] == after:
            raise Interrupt

    monkeypatch.setattr(experiment, "save_checkpoint", flaky)
    with pytest.raises(Interrupt):
        run_experiment(cfg, tmp_path)
    monkeypatch.setattr(experiment, "save_checkpoint", real)
    assert json.loads((tmp_path / "status.json").read_text())["status"] == "interrupted"


@pytest.mark.parametrize("after", [1, 9])
def test_interrupted_experiment_resumes_bit_identically(tmp_path, monkeypatch, after):
    cfg = small()
    run_experiment(cfg, tmp_path / "full")
    _interrupted(tmp_path / "cut", monkeypatch, cfg, after)
    run_experiment(cfg, tmp_path / "cut")
    assert (tmp_path / "full" / "summary.csv").read_bytes() == (tmp_path / "cut" / "summary.csv").read_bytes()
    for opt in cfg.optimizers:
        for seed in cfg.seeds:
            a = run_dir(tmp_path / "full", "single", opt, 0, seed)
            b = run_dir(tmp_path / "cut", "single", opt, 0, seed)
            assert (a / "result.json").read_bytes() == (b / "result.json").read_bytes()
            assert (a / "trace.ndjson").read_bytes() == (b / "trace.ndjson").read_bytes()


def test_resume_from_checkpoint_path(tmp_path, monkeypatch):
    cfg = small("[optimizer]\nnames = lmmaes+predictor\n")
    run_experiment(cfg, tmp_path / "full")
    _interrupted(tmp_path / "cut", monkeypatch, cfg, 3)
    ckpt = run_dir(tmp_path / "cut", "single", "lmmaes+predictor", 0, 0) / "checkpoint.npz"
    best = resume(ckpt)
    full = json.loads((run_dir(tmp_path / "full", "single", "lmmaes+predictor", 0, 0) / "result.json").read_text())
    np.testing.assert_array_equal(best, full["best_x"])
    assert not ckpt.exists()


def test_resume_of_finished_run_is_noop(tmp_path):
    cfg = small("[optimizer]\nnames = lmmaes\n[experiment]\nkeep_checkpoints = true\n")
    run_experiment(cfg, tmp_path)
    d = run_dir(tmp_path, "single", "lmmaes", 0, 0)
    before = (d / "result.json").read_bytes(), (d / "trace.ndjson").read_bytes()
    best = resume(d / "checkpoint.npz")
    assert before == ((d / "result.json").read_bytes(), (d / "trace.ndjson").read_bytes())
    np.testing.assert_array_equal(best, json.loads(before[0])["best_x"])


def test_corrupt_checkpoint_refused(tmp_path, monkeypatch):
    cfg = small("[optimizer]\nnames = lmmaes\n")
    _interrupted(tmp_path, monkeypatch, cfg, 2)
    ckpt = run_dir(tmp_path, "single", "lmmaes", 0, 0) / "checkpoint.npz"
    raw = bytearray(ckpt.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    ckpt.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        resume(ckpt)
    with pytest.raises(CoverageSearchError) as info:
        run_experiment(cfg, tmp_path)
    assert isinstance(info.value.__cause__, CheckpointError)
    assert main(["run", "--resume", str(ckpt)]) == 2


def test_checkpoint_of_other_run_refused(tmp_path, monkeypatch):
    cfg = small("[optimizer]\nnames = lmmaes\n")
    _interrupted(tmp_path, monkeypatch, cfg, 1)
    d0 = run_dir(tmp_path, "single", "lmmaes", 0, 0)
    d1 = run_dir(tmp_path, "single", "lmmaes", 0, 1)
    d1.mkdir(parents=True)
    shutil.copy(d0 / "checkpoint.npz", d1 / "checkpoint.npz")
    shutil.rmtree(d0)
    with pytest.raises(CoverageSearchError, match="different run") as info:
        run_experiment(cfg, tmp_path)
    assert isinstance(info.value.__cause__, CheckpointError)


def test_interrupt_halfway_through_default_length_run(tmp_path, monkeypatch):
    # 1200 generations of λ=22 at n=512; interrupt at generation 600
    text = "[optimizer]\nnames = lmmaes\n[experiment]\nseeds = 0\ncheckpoint_every = 600\n"
    cfg = load_config(text=text)
    run_experiment(cfg, tmp_path / "full")
    _interrupted(tmp_path / "cut", monkeypatch, cfg, 1)
    ckpt = run_dir(tmp_path / "cut", "single", "lmmaes", 0, 0) / "checkpoint.npz"
    assert experiment.load_checkpoint(ckpt)["run"]["optimizer"]["iteration"] == 600
    resume(ckpt)
    a = json.loads((run_dir(tmp_path / "full", "single", "lmmaes", 0, 0) / "result.json").read_text())
    b = json.loads((run_dir(tmp_path / "cut", "single", "lmmaes", 0, 0) / "result.json").read_text())
    assert a["iterations"] == 1200
    assert a["best_fitness"] == b["best_fitness"] and a["best_x"] == b["best_x"]


# ------------------------------------------------------------------- CLI

def test_cli_success_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(ini("[coverage]\nmode = greedy\nmax_iter = 2\n"))
    assert main(["run", "-c", str(cfg), "-o", str(tmp_path / "a"), "--seed", "3"]) == 0
    assert main(["run", "-c", str(cfg), "-o", str(tmp_path / "b"), "--seed", "3"]) == 0
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
    assert load_config(tmp_path / "a" / "config.ini").root_seed == 3
    assert "train_msc" in capsys.readouterr().out


def test_cli_budget_guard(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[experiment]\nbudget = 10\n")
    assert main(["run", "-c", str(cfg), "-o", str(tmp_path / "out")]) == 1
    assert "one generation" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_cli_config_errors(tmp_path):
    assert main(["run", "-c", str(tmp_path / "missing.ini")]) == 1
    bad = tmp_path / "bad.ini"
    bad.write_text("[coverage]\nmode = everything\n")
    assert main(["run", "-c", str(bad)]) == 1


def test_cli_runtime_failure(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(SMALL)
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "-c", str(cfg), "-o", str(blocker / "out")]) == 2
    assert main(["run", "--resume", str(tmp_path / "nothing.npz")]) == 2


def test_cli_resume_then_continue(tmp_path, monkeypatch):
    cfg = small("[optimizer]\nnames = lmmaes, random\n")
    run_experiment(cfg, tmp_path / "full")
    _interrupted(tmp_path / "cut", monkeypatch, cfg, 2)
    ckpt = run_dir(tmp_path / "cut", "single", "lmmaes", 0, 0) / "checkpoint.npz"
    assert main(["run", "--resume", str(ckpt)]) == 0
    assert (tmp_path / "full" / "summary.csv").read_bytes() == (tmp_path / "cut" / "summary.csv").read_bytes()


def test_console_script_help():
    proc = subprocess.run([sys.executable, "-m", "mastersample.cli", "run", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "--resume" in proc.stdout
