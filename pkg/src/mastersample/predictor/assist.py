"""Predictor-filtered generation: oversample, score, sample, evaluate, learn."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..evostrat import ObjectiveHandle, Optimizer, RunBudget, RunResult, SearchRun, rng_state
from .memory import ReplayMemory, nearest_rank_percentile, relabel


@dataclass(frozen=True)
class FilterConfig:
    oversample: int = 1000  # λ′
    population: int = 22  # λ
    percentile: float = 5.0
    accuracy_threshold: float = 0.6
    patience: int = 20
    warmup_fraction: float = 0.05

    def __post_init__(self):
        if self.population < 1 or self.oversample < self.population:
            raise ValueError("need 1 <= population <= oversample")
        if not 0 < self.percentile < 100:
            raise ValueError("percentile must be in (0, 100)")
        if not 0 < self.accuracy_threshold < 1:
            raise ValueError("accuracy_threshold must be in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be positive")
        if not 0 <= self.warmup_fraction <= 1:
            raise ValueError("warmup_fraction must be in [0, 1]")

    def warmup_iterations(self, planned_iterations: int) -> int:
        return int(math.floor(self.warmup_fraction * planned_iterations + 1e-9))


def softmax(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    e = np.exp(s - s.max())
    return e / e.sum()


def filter_candidates(net, pool: np.ndarray, count: int, rng: np.random.Generator):
    """Pick ``count`` distinct rows of ``pool`` with probabilities softmax(h(pool)).

    Returns ``(indices, scores)`` where ``scores`` are the predictor outputs of
    the selected rows, kept for the post-evaluation accuracy audit.
    """
    n = len(pool)
    if count > n:
        raise ValueError(f"cannot select {count} candidates from a pool of {n}")
    if count < 1:
        raise ValueError("count must be positive")
    scores = np.asarray(net.score(pool), dtype=float)
    if count == n:
        idx = np.arange(n)
    else:
        idx = rng.choice(n, size=count, replace=False, p=softmax(scores))
    return idx, scores[idx]


def audit_accuracy(scores, fitness, memory_fitness, p: float) -> float:
    """Fraction of candidates whose score > 0.5 agrees with beating the p-th percentile."""
    scores = np.asarray(scores, dtype=float)
    fitness = np.asarray(fitness, dtype=float)
    if scores.size == 0:
        raise ValueError("nothing to audit")
    cut = nearest_rank_percentile(memory_fitness, p)
    predicted = scores > 0.5
    actual = fitness < cut
    return float(np.mean(predicted == actual))


class SuccessPredictorHook:
    """Couples a predictor and replay memory to a :class:`SearchRun`.

    ``rng`` drives filtering, training shuffles and memory eviction; it is
    separate from the optimizer's stream so warm-up generations sample
    exactly what an unassisted run would. ``train_batches`` caps the
    mini-batches per generation (``None``: a full epoch over the memory).
    """

    def __init__(self, net, memory: ReplayMemory, config: FilterConfig, rng: np.random.Generator,
                 train_batches: int | None = None):
        self.net = net
        self.train_batches = train_batches
        self.memory = memory
        self.config = config
        self.rng = rng
        self.low_streak = 0
        self.reinit_count = 0

    def propose(self, optimizer: Optimizer, iteration: int, planned_iterations: int):
        if optimizer.population_size != self.config.population:
            raise ValueError(
                f"optimizer population {optimizer.population_size} != filter population "
                f"{self.config.population}"
            )
        if iteration < self.config.warmup_iterations(planned_iterations):
            return None
        X, Z = optimizer.ask(self.config.oversample)
        idx, scores = filter_candidates(self.net, X, self.config.population, self.rng)
        return X[idx], Z[idx], scores

    def observe(self, iteration, candidates, fitness, scores) -> dict:
        cfg = self.config
        accuracy = None
        if scores is not None and len(self.memory) > 0:
            accuracy = audit_accuracy(scores, fitness, self.memory.fitness, cfg.percentile)

        self.memory.insert_many(candidates, fitness)
        X, y = relabel(self.memory, cfg.percentile)
        loss = self.net.train_step(X, y, self.rng, max_batches=self.train_batches)

        reinit = False
        if accuracy is not None:
            self.low_streak = self.low_streak + 1 if accuracy < cfg.accuracy_threshold else 0
            if self.low_streak >= cfg.patience:
                self.net.reinitialize()
                self.low_streak = 0
                self.reinit_count += 1
                reinit = True
        return {
            "memory_size": len(self.memory),
            "accuracy": accuracy,
            "reinit": reinit,
            "loss": loss,
        }

    def state_dict(self) -> dict:
        return {
            "net": self.net.state_dict(),
            "memory": self.memory.state_dict(),
            "rng": rng_state(self.rng),
            "low_streak": self.low_streak,
            "reinit_count": self.reinit_count,
        }

    def load_state_dict(self, state: dict) -> None:
        self.net.load_state_dict(state["net"])
        self.memory.load_state_dict(state["memory"])
        self.rng.bit_generator.state = state["rng"]
        self.low_streak = int(state["low_streak"])
        self.reinit_count = int(state["reinit_count"])


def assisted_generation_loop(
    optimizer: Optimizer,
    net,
    memory: ReplayMemory,
    config: FilterConfig,
    objective: ObjectiveHandle,
    budget: RunBudget,
    rng: np.random.Generator,
    train_batches: int | None = None,
) -> RunResult:
    """Run ``optimizer`` with predictor filtering; records carry the diagnostics."""
    hook = SuccessPredictorHook(net, memory, config, rng, train_batches)
    return SearchRun(optimizer, objective, budget, hook=hook).run()
