"""Bounded replay memory of evaluated candidates and percentile labeling."""

from __future__ import annotations

import math

import numpy as np


def nearest_rank_percentile(values, p: float) -> float:
    """Value at rank ``ceil(p/100 * N)`` (1-based, at least 1) of the sorted sample."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("percentile of an empty sample")
    if not 0 < p <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {p}")
    rank = max(1, math.ceil(p / 100.0 * v.size))
    return float(v[rank - 1])


class ReplayMemory:
    """At most ``capacity`` (candidate, fitness) pairs.

    Overflow evicts one uniformly random entry per insert, never the current
    minimum-fitness entry.
    """

    def __init__(self, capacity: int, dimension: int, rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.dimension = dimension
        self.rng = rng
        self._X = np.empty((capacity + 1, dimension))
        self._f = np.empty(capacity + 1)
        self.size = 0

    def __len__(self) -> int:
        return self.size

    @property
    def candidates(self) -> np.ndarray:
        return self._X[: self.size]

    @property
    def fitness(self) -> np.ndarray:
        return self._f[: self.size]

    def best(self) -> tuple[np.ndarray, float]:
        if self.size == 0:
            raise ValueError("memory is empty")
        i = int(np.argmin(self.fitness))
        return self._X[i].copy(), float(self._f[i])

    def insert(self, candidate, fitness: float) -> None:
        fitness = float(fitness)
        if not math.isfinite(fitness):
            raise ValueError(f"cannot store non-finite fitness {fitness!r}")
        self._X[self.size] = candidate
        self._f[self.size] = fitness
        self.size += 1
        if self.size > self.capacity:
            keep = int(np.argmin(self.fitness))
            r = int(self.rng.integers(self.size - 1))
            victim = r if r < keep else r + 1
            last = self.size - 1
            self._X[victim] = self._X[last]
            self._f[victim] = self._f[last]
            self.size -= 1

    def insert_many(self, candidates, fitness) -> None:
        for x, f in zip(candidates, fitness):
            self.insert(x, f)

    def state_dict(self) -> dict:
        return {
            "capacity": self.capacity,
            "candidates": self.candidates.copy(),
            "fitness": self.fitness.copy(),
            "rng": self.rng.bit_generator.state,
        }

    def load_state_dict(self, state: dict) -> None:
        if int(state["capacity"]) != self.capacity:
            raise ValueError("memory capacity differs from checkpoint")
        X = np.asarray(state["candidates"], dtype=float).reshape(-1, self.dimension)
        self.size = X.shape[0]
        self._X[: self.size] = X
        self._f[: self.size] = np.asarray(state["fitness"], dtype=float)
        self.rng.bit_generator.state = state["rng"]


def relabel(memory: ReplayMemory, p: float) -> tuple[np.ndarray, np.ndarray]:
    """Label each stored candidate 1 iff its fitness is strictly below the p-th percentile."""
    if memory.size == 0:
        return np.empty((0, memory.dimension)), np.empty(0)
    cut = nearest_rank_percentile(memory.fitness, p)
    return memory.candidates, (memory.fitness < cut).astype(float)
