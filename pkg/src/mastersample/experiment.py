"""End-to-end attack experiments on a synthetic world.

Layout of an output directory::

    config.ini         resolved configuration (reloads to the same config)
    world.json         world settings, seed and gallery checksum
    split.json         train/test identity indices
    thresholds.json    calibrated thresholds and their train/test error rates
    runs/<mode>/<optimizer>/itNN/seedS/
        trace.ndjson   one diagnostics record per generation
        result.json    best latent and fitness of the finished run
        checkpoint.npz resumable state (removed on completion unless kept)
    coverage/<optimizer>.ndjson   masters selected on the train identities
    summary.csv        optimizer x train/test MSC
    status.json        running / complete / interrupted / failed

Every random number is drawn from a named substream of ``root_seed`` so
reruns are byte-identical and A/B comparisons share everything except the
component under test.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, dump_config, load_config, split_identities, substream
from .coverage import (
    CombinedProblem,
    CoverageReport,
    ThresholdWarning,
    clustered_coverage_search,
    combined_rates,
    combined_threshold_grid,
    far_frr,
    greedy_coverage,
    normalize_scores,
    threshold_at_eer,
    threshold_at_far,
)
from .evostrat import RunBudget, SearchRun, make_optimizer
from .predictor import PredictorNet, ReplayMemory, SuccessPredictorHook
from .synthworld import build_world, paired_world

log = logging.getLogger(__name__)

RUN_KIND = "search-run"


class ExperimentError(RuntimeError):
    """A run failed; partial artifacts are left on disk and flagged in status.json."""


@dataclass
class Setup:
    """Everything derived from the config before any optimization."""

    config: ExperimentConfig
    worlds: tuple  # one World, or the two models of a paired world
    train: np.ndarray
    test: np.ndarray
    thresholds: tuple[float, ...]
    calibration: dict

    def problem(self, subjects=None, thresholds=None):
        th = self.thresholds if thresholds is None else tuple(thresholds)
        if len(self.worlds) == 1:
            return self.worlds[0].problem(th[0], subjects)
        return CombinedProblem(tuple(w.problem(t, subjects) for w, t in zip(self.worlds, th)))

    @property
    def train_problem(self):
        return self.problem(self.train)

    @property
    def test_problem(self):
        return self.problem(self.test)


def _calibrate(cfg: ExperimentConfig, worlds, train) -> tuple[tuple[float, ...], dict]:
    scores = [w.pair_scores(train) for w in worlds]
    metric = cfg.world.metric
    if cfg.threshold_policy == "combined_grid":
        (na, sa), (nb, sb) = (normalize_scores(s, metric) for s in scores)
        ta, tb, eer = combined_threshold_grid(na, nb, cfg.grid_resolution)
        far, frr = combined_rates(na, nb, ta, tb)
        return (ta * sa, tb * sb), {"normalized": [ta, tb], "scale": [sa, sb], "train_eer": eer,
                                    "train_far": far, "train_frr": frr}
    s = scores[0]
    if cfg.threshold_policy == "eer":
        theta, eer = threshold_at_eer(s)
        info = {"train_eer": eer}
    else:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ThresholdWarning)
            theta = threshold_at_far(s, cfg.far_target)
        for w in caught:
            log.warning("%s", w.message)
        info = {"far_target": cfg.far_target, "attainable": not caught}
    far, frr = far_frr(s, theta)
    info.update(train_far=float(far), train_frr=float(frr))
    return (float(theta),), info


def prepare(cfg: ExperimentConfig) -> Setup:
    """Build the world(s), split identities and calibrate thresholds on train pairs."""
    if cfg.coverage_mode == "combined":
        pw = paired_world(cfg.world)
        worlds = (pw.a, pw.b)
    else:
        worlds = (build_world(cfg.world),)
    train, test = split_identities(cfg.world.n_identities, cfg.split_ratio, substream(cfg.root_seed, "split"))
    thresholds, calibration = _calibrate(cfg, worlds, train)
    if len(worlds) == 1:
        far, frr = far_frr(worlds[0].pair_scores(test), thresholds[0])
    else:
        ta, tb = (t / s for t, s in zip(thresholds, calibration["scale"]))
        na = normalize_scores(worlds[0].pair_scores(test), cfg.world.metric, calibration["scale"][0])[0]
        nb = normalize_scores(worlds[1].pair_scores(test), cfg.world.metric, calibration["scale"][1])[0]
        far, frr = combined_rates(na, nb, ta, tb)
    calibration.update(test_far=float(far), test_frr=float(frr))
    return Setup(cfg, worlds, train, test, thresholds, calibration)


# ---------------------------------------------------------------- single runs

def _safe(name: str) -> str:
    return name.replace("+", "_")


def run_dir(out: Path, mode: str, optimizer: str, iteration: int, seed: int) -> Path:
    return Path(out) / "runs" / mode / _safe(optimizer) / f"it{iteration:02d}" / f"seed{seed}"


def build_run(cfg: ExperimentConfig, problem, optimizer: str, seed: int, iteration: int) -> SearchRun:
    """A fresh :class:`SearchRun` whose streams depend only on (root seed, seed, iteration).

    Plain and assisted LM-MA-ES share the optimizer stream, so they sample
    identically until the filter engages.
    """
    dim = cfg.world.latent_dim
    base = "lmmaes" if optimizer == "lmmaes+predictor" else optimizer
    kwargs = {"population_size": cfg.lam}
    if base == "lmmaes":
        kwargs["initial_sigma"] = cfg.initial_sigma
    opt = make_optimizer(base, dim, substream(cfg.root_seed, "optimizer", seed, iteration), **kwargs)
    hook = None
    if optimizer == "lmmaes+predictor":
        p = cfg.predictor
        net = PredictorNet(dim, seed=substream(cfg.root_seed, "predictor-init", seed, iteration),
                           hidden=p.hidden, learning_rate=p.learning_rate, batch_size=p.batch_size)
        memory = ReplayMemory(p.capacity, dim,
                              np.random.default_rng(substream(cfg.root_seed, "memory", seed, iteration)))
        rng = np.random.default_rng(substream(cfg.root_seed, "predictor", seed, iteration))
        hook = SuccessPredictorHook(net, memory, cfg.filter, rng, train_batches=p.train_batches)
    return SearchRun(opt, problem.objective(), RunBudget(cfg.budget, seed), hook=hook)


def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _write_trace(path: Path, records) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _payload(cfg, optimizer, seed, iteration, subjects, thresholds, run: SearchRun) -> dict:
    return {
        "kind": RUN_KIND,
        "config": dump_config(cfg),
        "optimizer": optimizer,
        "seed": seed,
        "iteration": iteration,
        "subjects": np.asarray(subjects, dtype=np.int64),
        "thresholds": [float(t) for t in thresholds],
        "finished": run.done,
        "run": run.state_dict(),
    }


def _finish(directory: Path, run: SearchRun, cfg: ExperimentConfig, payload: dict) -> np.ndarray:
    res = run.result()
    _write_trace(directory / "trace.ndjson", res.records)
    _write_json(directory / "result.json", {
        "optimizer": payload["optimizer"],
        "seed": payload["seed"],
        "iteration": payload["iteration"],
        "best_x": [float(v) for v in res.best_x],
        "best_fitness": res.best_fitness,
        "evaluations": res.evaluations,
        "iterations": res.iterations,
        "terminated": res.terminated,
        "reinit_count": run.hook.reinit_count if run.hook is not None else None,
    })
    ckpt = directory / "checkpoint.npz"
    if cfg.keep_checkpoints:
        save_checkpoint(ckpt, payload)
    elif ckpt.exists():
        ckpt.unlink()
    return res.best_x


def _advance(directory: Path, run: SearchRun, cfg, optimizer, seed, iteration, subjects, thresholds) -> np.ndarray:
    every = cfg.checkpoint_every
    payload = _payload(cfg, optimizer, seed, iteration, subjects, thresholds, run)
    while not run.done:
        run.run(until=(run.iteration // every + 1) * every)
        payload = _payload(cfg, optimizer, seed, iteration, subjects, thresholds, run)
        if not run.done:
            save_checkpoint(directory / "checkpoint.npz", payload)
            _write_trace(directory / "trace.ndjson", run.records)
            log.debug("%s: checkpoint at generation %d", directory, run.iteration)
    if run.terminated:
        log.warning("%s stopped early: %s", directory, run.terminated)
    return _finish(directory, run, cfg, payload)


def run_single(setup: Setup, out: Path, mode: str, optimizer: str, problem, seed: int,
               iteration: int) -> np.ndarray:
    """One checkpointed inner search; finished runs are read back instead of rerun."""
    cfg = setup.config
    directory = run_dir(out, mode, optimizer, iteration, seed)
    done = directory / "result.json"
    if done.exists():
        return np.array(json.loads(done.read_text())["best_x"], dtype=float)
    directory.mkdir(parents=True, exist_ok=True)
    subjects = np.asarray(problem.subject_ids, dtype=np.int64)
    run = build_run(cfg, problem, optimizer, seed, iteration)
    ckpt = directory / "checkpoint.npz"
    if ckpt.exists():
        state = load_checkpoint(ckpt)
        _check_matches(state, cfg, optimizer, seed, iteration, subjects, setup.thresholds)
        run.load_state_dict(state["run"])
        log.info("%s: resumed at generation %d", directory, run.iteration)
    return _advance(directory, run, cfg, optimizer, seed, iteration, subjects, setup.thresholds)


def _check_matches(state, cfg, optimizer, seed, iteration, subjects, thresholds) -> None:
    same = (
        state.get("kind") == RUN_KIND
        and load_config(text=state["config"]) == cfg
        and state["optimizer"] == optimizer
        and int(state["seed"]) == seed
        and int(state["iteration"]) == iteration
        and np.array_equal(np.asarray(state["subjects"]), subjects)
        and tuple(state["thresholds"]) == tuple(thresholds)
    )
    if not same:
        raise CheckpointError("checkpoint belongs to a different run or configuration")


def resume(checkpoint_path) -> np.ndarray:
    """Finish the run stored in ``checkpoint_path``; a finished run is a no-op.

    Returns the run's best latent. The remaining generations reproduce an
    uninterrupted run bit for bit.
    """
    path = Path(checkpoint_path)
    state = load_checkpoint(path)
    if state.get("kind") != RUN_KIND:
        raise CheckpointError(f"{path} is not a search-run checkpoint")
    cfg = load_config(text=state["config"])
    directory = path.parent
    optimizer, seed, iteration = state["optimizer"], int(state["seed"]), int(state["iteration"])
    subjects = np.asarray(state["subjects"], dtype=np.int64)
    thresholds = tuple(state["thresholds"])
    setup = _setup_for_resume(cfg, thresholds)
    run = build_run(cfg, setup.problem(subjects, thresholds), optimizer, seed, iteration)
    run.load_state_dict(state["run"])
    if state["finished"] and (directory / "result.json").exists():
        log.info("%s: run already finished", path)
        return np.array(run.best_x, dtype=float)
    return _advance(directory, run, cfg, optimizer, seed, iteration, subjects, thresholds)


def _setup_for_resume(cfg: ExperimentConfig, thresholds) -> Setup:
    if cfg.coverage_mode == "combined":
        pw = paired_world(cfg.world)
        worlds = (pw.a, pw.b)
    else:
        worlds = (build_world(cfg.world),)
    empty = np.array([], dtype=np.int64)
    return Setup(cfg, worlds, empty, empty, tuple(thresholds), {})


# ----------------------------------------------------------------- experiment

@dataclass
class OptimizerResult:
    optimizer: str
    report: CoverageReport
    train_msc: float
    test_msc: float
    seed_train_msc: list[float]  # first-iteration MSC of every seed's master


def _dictionary_msc(problem, latents: np.ndarray) -> float:
    if len(latents) == 0:
        return 0.0
    hit = problem.matches(latents).any(axis=0)
    return 100.0 * int(hit.sum()) / problem.n_subjects


def _run_optimizer(setup: Setup, out: Path, optimizer: str) -> OptimizerResult:
    cfg = setup.config
    mode = cfg.coverage_mode
    train_problem = setup.train_problem
    first_iteration: dict[int, float] = {}

    def inner(problem, seed, iteration):
        z = run_single(setup, out, mode, optimizer, problem, seed, iteration)
        if iteration == 0:
            first_iteration[seed] = float(train_problem.msc(z[None, :])[0])
        return z

    seeds = list(cfg.seeds)
    if mode == "single":
        report = greedy_coverage(train_problem, 1, inner, seeds)
    elif mode in ("greedy", "combined"):
        report = greedy_coverage(train_problem, cfg.max_iter, inner, seeds)
    else:
        report = clustered_coverage_search(train_problem, cfg.clusters, inner, seeds,
                                           cluster_seed=substream(cfg.root_seed, "cluster"))
    latents = report.latents
    return OptimizerResult(
        optimizer=optimizer,
        report=report,
        train_msc=report.cumulative_coverage,
        test_msc=_dictionary_msc(setup.test_problem, latents),
        seed_train_msc=[first_iteration[s] for s in seeds if s in first_iteration],
    )


SUMMARY_FIELDS = ("mode", "optimizer", "masters", "train_msc", "test_msc",
                  "median_seed_train_msc", "best_seed_train_msc")


def summary_rows(mode: str, results: list[OptimizerResult]) -> list[dict]:
    rows = []
    for r in results:
        seeds = np.array(r.seed_train_msc) if r.seed_train_msc else np.array([np.nan])
        rows.append({
            "mode": mode,
            "optimizer": r.optimizer,
            "masters": len(r.report.entries),
            "train_msc": f"{r.train_msc:.4f}",
            "test_msc": f"{r.test_msc:.4f}",
            "median_seed_train_msc": f"{float(np.median(seeds)):.4f}",
            "best_seed_train_msc": f"{float(np.max(seeds)):.4f}",
        })
    return rows


def format_table(rows: list[dict]) -> str:
    cols = list(SUMMARY_FIELDS)
    width = {c: max(len(c), *(len(str(r[c])) for r in rows)) for c in cols}
    lines = ["  ".join(c.ljust(width[c]) for c in cols), "  ".join("-" * width[c] for c in cols)]
    for r in rows:
        lines.append("  ".join(str(r[c]).rjust(width[c]) if c not in ("mode", "optimizer")
                               else str(r[c]).ljust(width[c]) for c in cols))
    return "\n".join(lines)


def _summary_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def _write_static(setup: Setup, out: Path) -> None:
    cfg = setup.config
    (out / "config.ini").write_text(dump_config(cfg))
    worlds = [{"config": w.config.to_dict(), "encoder_seed": w.encoder.seed, "checksum": w.checksum()}
              for w in setup.worlds]
    _write_json(out / "world.json", {"models": worlds})
    _write_json(out / "split.json", {"train": setup.train.tolist(), "test": setup.test.tolist()})
    _write_json(out / "thresholds.json", {
        "policy": cfg.threshold_policy,
        "thresholds": list(setup.thresholds),
        **setup.calibration,
    })


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> list[OptimizerResult]:
    """Run every optimizer on the configured attack and write all artifacts.

    Finished runs found in ``out_dir`` are reused and checkpointed ones are
    resumed, so an interrupted experiment can simply be started again.
    """
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    # where the results live is not part of the experiment's identity
    if (out / "config.ini").exists() and replace(load_config(out / "config.ini"), output_dir=cfg.output_dir) != cfg:
        raise ExperimentError(f"{out} holds results of a different configuration")
    _write_json(out / "status.json", {"status": "running"})
    try:
        setup = prepare(cfg)
        _write_static(setup, out)
        log.info("thresholds %s (%s)", setup.thresholds, cfg.threshold_policy)
        results = []
        for name in cfg.optimizers:
            log.info("optimizer %s, mode %s", name, cfg.coverage_mode)
            res = _run_optimizer(setup, out, name)
            res.report.save(out / "coverage" / f"{_safe(name)}.ndjson")
            results.append(res)
        rows = summary_rows(cfg.coverage_mode, results)
        (out / "summary.csv").write_text(_summary_csv(rows))
    except KeyboardInterrupt:
        _write_json(out / "status.json", {"status": "interrupted"})
        raise
    except Exception as exc:
        _write_json(out / "status.json", {"status": "failed", "error": f"{type(exc).__name__}: {exc}"})
        raise
    _write_json(out / "status.json", {"status": "complete"})
    print(format_table(rows))
    return results


def recompute_summary(out_dir) -> list[dict]:
    """Summary rows recomputed from persisted latents, world seed and thresholds only."""
    out = Path(out_dir)
    cfg = load_config(out / "config.ini")
    thresholds = json.loads((out / "thresholds.json").read_text())["thresholds"]
    split = json.loads((out / "split.json").read_text())
    setup = _setup_for_resume(cfg, thresholds)
    train_p = setup.problem(np.array(split["train"]), thresholds)
    test_p = setup.problem(np.array(split["test"]), thresholds)
    rows = []
    for name in cfg.optimizers:
        report = CoverageReport.load(out / "coverage" / f"{_safe(name)}.ndjson")
        latents = report.latents
        rows.append({"optimizer": name, "train_msc": f"{_dictionary_msc(train_p, latents):.4f}",
                     "test_msc": f"{_dictionary_msc(test_p, latents):.4f}"})
    return rows
