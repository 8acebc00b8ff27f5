"""Ask/tell black-box minimizers: LM-MA-ES and random search.

Every optimizer here follows the same small protocol (:class:`Optimizer`):
``ask`` returns candidates together with the raw standard-normal draws they
were built from, and ``tell`` takes exactly one population of evaluated
candidates back. Keeping the draws around lets a caller filter an
oversampled pool between ``ask`` and ``tell`` (see ``mastersample.predictor``).

:class:`SearchRun` drives an optimizer against an :class:`ObjectiveHandle`
under an evaluation budget and can be checkpointed between generations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import numpy as np

log = logging.getLogger(__name__)

SIGMA_MIN = 1e-20
SIGMA_MAX = 1e20


class StepSizeError(FloatingPointError):
    """Step size left ``[SIGMA_MIN, SIGMA_MAX]`` or became non-finite."""


class ObjectiveError(RuntimeError):
    """The objective returned a non-finite value."""


class ObjectiveHandle:
    """Counts evaluations of a minimization objective over R^n.

    Args:
        fn: the objective. With ``batched=True`` it maps a ``(k, n)`` array
            to ``k`` fitness values, otherwise one vector to one scalar.
        dimension: n.
        batched: whether ``fn`` accepts a whole population at once.
    """

    def __init__(self, fn: Callable, dimension: int, batched: bool = False):
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self.fn = fn
        self.dimension = int(dimension)
        self.batched = batched
        self.evaluation_counter = 0

    def evaluate(self, z) -> float:
        return float(self.evaluate_many(np.asarray(z, dtype=float)[None, :])[0])

    def evaluate_many(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] != self.dimension:
            raise ValueError(f"expected shape (k, {self.dimension}), got {Z.shape}")
        if self.batched:
            f = np.asarray(self.fn(Z), dtype=float).reshape(-1)
        else:
            f = np.array([float(self.fn(z)) for z in Z])
        if f.shape[0] != Z.shape[0]:
            raise ObjectiveError(f"objective returned {f.shape[0]} values for {Z.shape[0]} inputs")
        self.evaluation_counter += Z.shape[0]
        if not np.all(np.isfinite(f)):
            bad = int(np.flatnonzero(~np.isfinite(f))[0])
            raise ObjectiveError(
                f"objective returned non-finite value {f[bad]!r} "
                f"(evaluation #{self.evaluation_counter - Z.shape[0] + bad + 1})"
            )
        return f


@dataclass(frozen=True)
class RunBudget:
    max_evaluations: int
    seed: int = 0

    def __post_init__(self):
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def default_population_size(dimension: int) -> int:
    return 4 + int(math.floor(3 * math.log(dimension)))


def recombination_weights(mu: int) -> np.ndarray:
    w = math.log(mu + 0.5) - np.log(np.arange(1, mu + 1))
    return w / w.sum()


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    bitgen = getattr(np.random, state["bit_generator"])()
    bitgen.state = state
    return np.random.Generator(bitgen)


class Optimizer(Protocol):
    """What :class:`SearchRun` needs from a minimizer.

    ``ask(count)`` returns ``(candidates, draws)``, both ``(count, n)``;
    ``tell`` receives exactly ``population_size`` evaluated rows. New
    baselines plug in by implementing these plus ``state_dict`` /
    ``load_state_dict`` for checkpointing.
    """

    name: str
    dimension: int
    population_size: int

    def ask(self, count: int | None = None) -> tuple[np.ndarray, np.ndarray]: ...

    def tell(self, candidates: np.ndarray, draws: np.ndarray, fitness: np.ndarray) -> None: ...

    def state_dict(self) -> dict: ...

    def load_state_dict(self, state: dict) -> None: ...


@dataclass
class EvolutionState:
    mean: np.ndarray
    sigma: float
    directions: np.ndarray  # (m, n), row j is the j-th direction vector
    path_sigma: np.ndarray
    weights: np.ndarray
    lam: int
    mu: int
    iteration: int
    rng: np.random.Generator

    @property
    def dimension(self) -> int:
        return self.mean.shape[0]

    def copy(self) -> "EvolutionState":
        return EvolutionState(
            mean=self.mean.copy(),
            sigma=self.sigma,
            directions=self.directions.copy(),
            path_sigma=self.path_sigma.copy(),
            weights=self.weights.copy(),
            lam=self.lam,
            mu=self.mu,
            iteration=self.iteration,
            rng=rng_from_state(rng_state(self.rng)),
        )


class LMMAES:
    """Limited-memory matrix adaptation evolution strategy.

    Follows Loshchilov, Glasmachers & Beyer (2017): ``m = λ`` direction
    vectors with learning rates ``c_d,j = 1/(1.5^j n)`` and
    ``c_c,j = λ/(4^j n)`` (j counted from 0), and the path-length step-size
    rule ``σ ← σ exp(c_σ/2 (|p_σ|²/n - 1))`` with ``c_σ = 2λ/n``. Rates are
    capped at 1 so small problems (λ ≥ n/2) stay well defined.

    State is O(m n); there is no covariance matrix.
    """

    name = "lmmaes"

    def __init__(
        self,
        dimension: int,
        seed: int = 0,
        initial_mean=None,
        initial_sigma: float = 1.0,
        population_size: int | None = None,
    ):
        if dimension < 2:
            raise ValueError(f"dimension must be at least 2, got {dimension}")
        if not (initial_sigma > 0 and math.isfinite(initial_sigma)):
            raise ValueError(f"initial_sigma must be positive, got {initial_sigma}")
        lam = population_size if population_size is not None else default_population_size(dimension)
        if lam < 2:
            raise ValueError(f"population size must be at least 2, got {lam}")
        mu = lam // 2
        if initial_mean is None:
            mean = np.zeros(dimension)
        else:
            mean = np.array(initial_mean, dtype=float)
            if mean.shape != (dimension,):
                raise ValueError(f"initial_mean must have shape ({dimension},)")

        self.dimension = dimension
        self.population_size = lam
        self.state = EvolutionState(
            mean=mean,
            sigma=float(initial_sigma),
            directions=np.zeros((lam, dimension)),
            path_sigma=np.zeros(dimension),
            weights=recombination_weights(mu),
            lam=lam,
            mu=mu,
            iteration=0,
            rng=np.random.default_rng(seed),
        )
        n = float(dimension)
        self.mueff = 1.0 / float(np.sum(self.state.weights**2))
        j = np.arange(lam)
        self.c_sigma = min(1.0, 2.0 * lam / n)
        self.c_d = 1.0 / (1.5**j * n)
        self.c_c = np.minimum(1.0, lam / (4.0**j * n))

    def transform(self, Z: np.ndarray) -> np.ndarray:
        """Apply the stored direction vectors to standard-normal rows.

        The sequential rule ``d <- (1-c_j) d + c_j (d.v_j) v_j`` for
        ``j < min(t, m)`` is a product of maps ``(1-c_j) I + c_j v_j v_jᵀ``.
        That product equals ``s I + Vᵀ K V`` for a scalar ``s`` and a small
        ``k x k`` matrix ``K``, so a whole batch costs two thin matrix
        products instead of ``k`` passes over it.
        """
        s = self.state
        Z = np.asarray(Z, dtype=float)
        k = min(s.iteration, s.directions.shape[0])
        if k == 0:
            return Z.copy()
        V = s.directions[:k]
        G = V @ V.T
        K = np.zeros((k, k))
        scale = 1.0
        for j in range(k):
            c = self.c_d[j]
            col = K @ G[:, j]
            col[j] += scale
            K *= 1.0 - c
            K[:, j] += c * col
            scale *= 1.0 - c
        return scale * Z + ((Z @ V.T) @ K) @ V

    def ask(self, count: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        count = self.population_size if count is None else count
        if count < 1:
            raise ValueError(f"count must be at least 1, got {count}")
        s = self.state
        Z = s.rng.standard_normal((count, self.dimension))
        X = s.mean + s.sigma * self.transform(Z)
        return X, Z

    def tell(self, candidates: np.ndarray, draws: np.ndarray, fitness: np.ndarray) -> None:
        s = self.state
        X = np.asarray(candidates, dtype=float)
        Z = np.asarray(draws, dtype=float)
        f = np.asarray(fitness, dtype=float).reshape(-1)
        if X.shape != (s.lam, self.dimension) or Z.shape != X.shape or f.shape != (s.lam,):
            raise ValueError(
                f"tell expects exactly λ={s.lam} candidates of dimension {self.dimension}, "
                f"got candidates {X.shape}, draws {Z.shape}, fitness {f.shape}"
            )
        if not np.all(np.isfinite(f)):
            raise ValueError("tell received non-finite fitness")

        best = np.argsort(f, kind="stable")[: s.mu]
        z_w = s.weights @ Z[best]
        new_mean = s.weights @ X[best]

        cs = self.c_sigma
        path = (1.0 - cs) * s.path_sigma + math.sqrt(self.mueff * cs * (2.0 - cs)) * z_w
        cc = self.c_c[:, None]
        directions = (1.0 - cc) * s.directions + np.sqrt(self.mueff * cc * (2.0 - cc)) * z_w
        sigma = s.sigma * math.exp(0.5 * cs * (float(path @ path) / self.dimension - 1.0))

        s.mean = new_mean
        s.path_sigma = path
        s.directions = directions
        s.iteration += 1
        if not (SIGMA_MIN <= sigma <= SIGMA_MAX) or not math.isfinite(sigma):
            raise StepSizeError(
                f"step size {sigma!r} left [{SIGMA_MIN}, {SIGMA_MAX}] at iteration {s.iteration}"
            )
        s.sigma = sigma

    def state_dict(self) -> dict:
        s = self.state
        return {
            "name": self.name,
            "mean": s.mean.copy(),
            "sigma": s.sigma,
            "directions": s.directions.copy(),
            "path_sigma": s.path_sigma.copy(),
            "lam": s.lam,
            "iteration": s.iteration,
            "rng": rng_state(s.rng),
        }

    def load_state_dict(self, state: dict) -> None:
        if state["name"] != self.name or int(state["lam"]) != self.population_size:
            raise ValueError("state does not belong to this optimizer configuration")
        s = self.state
        s.mean = np.array(state["mean"], dtype=float)
        s.sigma = float(state["sigma"])
        s.directions = np.array(state["directions"], dtype=float)
        s.path_sigma = np.array(state["path_sigma"], dtype=float)
        s.iteration = int(state["iteration"])
        s.rng = rng_from_state(state["rng"])


def random_search_step(dimension: int, seed: int, count: int) -> np.ndarray:
    """``count`` i.i.d. standard-normal candidates from a fresh seeded stream."""
    if count < 1 or dimension < 1:
        raise ValueError("dimension and count must be positive")
    return np.random.default_rng(seed).standard_normal((count, dimension))


class RandomSearch:
    """Independent standard-normal sampling; ``tell`` ignores the feedback."""

    name = "random"

    def __init__(self, dimension: int, seed: int = 0, population_size: int | None = None):
        if dimension < 1:
            raise ValueError(f"dimension must be positive, got {dimension}")
        self.dimension = dimension
        self.population_size = (
            population_size if population_size is not None else default_population_size(max(dimension, 2))
        )
        self.rng = np.random.default_rng(seed)

    def ask(self, count: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        count = self.population_size if count is None else count
        if count < 1:
            raise ValueError(f"count must be at least 1, got {count}")
        Z = self.rng.standard_normal((count, self.dimension))
        return Z, Z

    def tell(self, candidates, draws, fitness) -> None:
        if len(fitness) != self.population_size:
            raise ValueError(f"tell expects {self.population_size} candidates, got {len(fitness)}")

    def state_dict(self) -> dict:
        return {"name": self.name, "rng": rng_state(self.rng)}

    def load_state_dict(self, state: dict) -> None:
        if state["name"] != self.name:
            raise ValueError("state does not belong to a random search")
        self.rng = rng_from_state(state["rng"])


def make_optimizer(name: str, dimension: int, seed: int, **kwargs) -> Optimizer:
    if name == "lmmaes":
        return LMMAES(dimension, seed=seed, **kwargs)
    if name == "random":
        return RandomSearch(dimension, seed=seed, population_size=kwargs.get("population_size"))
    raise ValueError(f"unknown optimizer {name!r}")


class GenerationHook(Protocol):
    """Optional per-generation extension of :class:`SearchRun`.

    ``propose`` may replace the optimizer's plain ``ask`` by returning
    ``(candidates, draws, extra)``; returning ``None`` falls back to it.
    ``observe`` sees the evaluated generation before ``tell`` and returns
    extra fields for the per-iteration diagnostics record.
    """

    def propose(self, optimizer: Optimizer, iteration: int, planned_iterations: int): ...

    def observe(self, iteration: int, candidates: np.ndarray, fitness: np.ndarray, extra: Any) -> dict: ...

    def state_dict(self) -> dict: ...

    def load_state_dict(self, state: dict) -> None: ...


@dataclass
class RunResult:
    best_x: np.ndarray
    best_fitness: float
    trace: list[float]
    evaluations: int
    iterations: int
    terminated: str | None = None
    records: list[dict] = field(default_factory=list)


class SearchRun:
    """One budgeted minimization, advanced a generation at a time.

    Only whole generations are evaluated: ``max_evaluations // λ`` of them.
    The best-so-far value is appended to ``trace`` after every generation.
    """

    def __init__(self, optimizer: Optimizer, objective: ObjectiveHandle, budget: RunBudget,
                 hook: GenerationHook | None = None):
        lam = optimizer.population_size
        if budget.max_evaluations < lam:
            raise ValueError(
                f"budget of {budget.max_evaluations} evaluations is less than one generation (λ={lam})"
            )
        if objective.dimension != optimizer.dimension:
            raise ValueError("optimizer and objective dimensions differ")
        self.optimizer = optimizer
        self.objective = objective
        self.budget = budget
        self.hook = hook
        self.planned_iterations = budget.max_evaluations // lam
        self.iteration = 0
        self.evaluations = 0
        self.best_x: np.ndarray | None = None
        self.best_fitness = math.inf
        self.trace: list[float] = []
        self.records: list[dict] = []
        self.terminated: str | None = None

    @property
    def done(self) -> bool:
        return self.terminated is not None or self.iteration >= self.planned_iterations

    def step(self) -> dict:
        it = self.iteration
        proposal = self.hook.propose(self.optimizer, it, self.planned_iterations) if self.hook else None
        if proposal is None:
            X, Z = self.optimizer.ask()
            extra = None
        else:
            X, Z, extra = proposal

        before = self.objective.evaluation_counter
        f = self.objective.evaluate_many(X)
        self.evaluations += self.objective.evaluation_counter - before

        i = int(np.argmin(f))
        if f[i] < self.best_fitness:
            self.best_fitness = float(f[i])
            self.best_x = X[i].copy()
        self.trace.append(self.best_fitness)
        record = {"iteration": it, "best_fitness": self.best_fitness}
        if self.hook is not None:
            record.update(self.hook.observe(it, X, f, extra))
        self.records.append(record)

        self.iteration += 1
        try:
            self.optimizer.tell(X, Z, f)
        except StepSizeError as exc:
            self.terminated = str(exc)
            log.warning("run terminated: %s", exc)
        return record

    def run(self, until: int | None = None) -> RunResult:
        """Advance until the budget is spent (or ``until`` generations are done)."""
        stop = self.planned_iterations if until is None else min(until, self.planned_iterations)
        while not self.done and self.iteration < stop:
            self.step()
        return self.result()

    def result(self) -> RunResult:
        return RunResult(
            best_x=self.best_x,
            best_fitness=self.best_fitness,
            trace=list(self.trace),
            evaluations=self.evaluations,
            iterations=self.iteration,
            terminated=self.terminated,
            records=list(self.records),
        )

    def state_dict(self) -> dict:
        return {
            "optimizer": self.optimizer.state_dict(),
            "hook": self.hook.state_dict() if self.hook is not None else None,
            "max_evaluations": self.budget.max_evaluations,
            "iteration": self.iteration,
            "evaluations": self.evaluations,
            "best_x": self.best_x,
            "best_fitness": self.best_fitness if math.isfinite(self.best_fitness) else None,
            "trace": list(self.trace),
            "records": list(self.records),
            "terminated": self.terminated,
        }

    def load_state_dict(self, state: dict) -> None:
        if int(state["max_evaluations"]) != self.budget.max_evaluations:
            raise ValueError("checkpoint budget differs from this run's budget")
        if (state["hook"] is None) != (self.hook is None):
            raise ValueError("checkpoint and run disagree on predictor assistance")
        self.optimizer.load_state_dict(state["optimizer"])
        if self.hook is not None:
            self.hook.load_state_dict(state["hook"])
        self.iteration = int(state["iteration"])
        self.evaluations = int(state["evaluations"])
        self.objective.evaluation_counter = self.evaluations
        bx = state["best_x"]
        self.best_x = None if bx is None else np.array(bx, dtype=float)
        bf = state["best_fitness"]
        self.best_fitness = math.inf if bf is None else float(bf)
        self.trace = [float(v) for v in state["trace"]]
        self.records = [dict(r) for r in state["records"]]
        self.terminated = state["terminated"]


def run_optimizer(optimizer: Optimizer, objective: ObjectiveHandle, budget: RunBudget) -> RunResult:
    """Minimize ``objective`` with ``optimizer`` for ``budget.max_evaluations // λ`` generations."""
    return SearchRun(optimizer, objective, budget).run()
