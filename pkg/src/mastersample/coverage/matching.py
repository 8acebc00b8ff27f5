"""Match predicate, coverage fitness and MSC over an enrolled embedding gallery."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..evostrat import ObjectiveHandle

METRICS = ("euclidean", "cosine")


def _check_metric(metric: str) -> None:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def _unit_rows(A: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(A, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cosine distance is undefined for zero vectors")
    return A / norms


def pairwise_distances(A, B, metric: str) -> np.ndarray:
    """Distances between every row of ``A`` and every row of ``B``.

    Cosine distance ``1 - cos`` is evaluated as ``|â - b̂|²/2`` on the unit
    vectors, which is exactly 0 for parallel inputs and never leaves [0, 2].
    """
    _check_metric(metric)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if metric == "cosine":
        A, B = _unit_rows(A), _unit_rows(B)
    sq = np.sum((A[:, None, :] - B[None, :, :]) ** 2, axis=-1)
    return np.sqrt(sq) if metric == "euclidean" else 0.5 * sq


def distance(a, b, metric: str) -> float:
    return float(pairwise_distances(a, b, metric)[0, 0])


def match(a, b, metric: str, threshold: float) -> int:
    """1 if ``a`` and ``b`` are within ``threshold`` (strictly), else 0."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValueError("embeddings must be finite")
    return int(distance(a, b, metric) < threshold)


@dataclass(frozen=True)
class EmbeddingGallery:
    """One enrolled embedding per subject."""

    embeddings: np.ndarray
    metric: str = "euclidean"
    subject_ids: tuple = ()

    def __post_init__(self):
        _check_metric(self.metric)
        E = np.atleast_2d(np.asarray(self.embeddings, dtype=float))
        if not np.all(np.isfinite(E)):
            raise ValueError("gallery embeddings must be finite")
        if self.metric == "cosine" and np.any(np.linalg.norm(E, axis=1) == 0):
            raise ValueError("cosine gallery cannot contain zero vectors")
        ids = tuple(self.subject_ids) if len(self.subject_ids) else tuple(range(E.shape[0]))
        if len(ids) != E.shape[0]:
            raise ValueError("need exactly one subject id per embedding")
        if len(set(ids)) != len(ids):
            raise ValueError("subject ids must be unique (one embedding per subject)")
        E.setflags(write=False)
        object.__setattr__(self, "embeddings", E)
        object.__setattr__(self, "subject_ids", ids)

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    def subset(self, indices) -> "EmbeddingGallery":
        indices = np.asarray(indices)
        if indices.dtype == bool:
            indices = np.flatnonzero(indices)
        return EmbeddingGallery(
            self.embeddings[indices], self.metric, tuple(self.subject_ids[i] for i in indices)
        )


def match_matrix(embeddings, gallery: EmbeddingGallery, threshold: float) -> np.ndarray:
    """Boolean ``(k, len(gallery))`` matrix of strict matches."""
    return pairwise_distances(embeddings, gallery.embeddings, gallery.metric) < threshold


def msc(embedding, gallery: EmbeddingGallery, threshold: float) -> float:
    """Percentage of gallery subjects matched by ``embedding``."""
    if len(gallery) == 0:
        raise ValueError("empty gallery")
    return 100.0 * int(match_matrix(embedding, gallery, threshold)[0].sum()) / len(gallery)


@dataclass(frozen=True)
class VerificationProblem:
    """A gallery, a threshold and the latent-to-embedding map under attack."""

    gallery: EmbeddingGallery
    threshold: float
    encoder: Callable[[np.ndarray], np.ndarray]
    latent_dim: int | None = None

    @property
    def n_subjects(self) -> int:
        return len(self.gallery)

    @property
    def subject_ids(self) -> tuple:
        return self.gallery.subject_ids

    @property
    def cluster_gallery(self) -> EmbeddingGallery:
        return self.gallery

    def encode(self, Z) -> np.ndarray:
        return np.atleast_2d(self.encoder(np.atleast_2d(np.asarray(Z, dtype=float))))

    def matches(self, Z) -> np.ndarray:
        """Boolean ``(k, n_subjects)`` matches for a batch of latents."""
        return match_matrix(self.encode(Z), self.gallery, self.threshold)

    def fitness(self, Z) -> np.ndarray:
        if self.n_subjects == 0:
            raise ValueError("coverage fitness needs a non-empty gallery")
        return 1.0 - self.matches(Z).sum(axis=1) / self.n_subjects

    def msc(self, Z) -> np.ndarray:
        if self.n_subjects == 0:
            raise ValueError("MSC needs a non-empty gallery")
        return 100.0 * self.matches(Z).sum(axis=1) / self.n_subjects

    def restrict(self, indices) -> "VerificationProblem":
        return VerificationProblem(self.gallery.subset(indices), self.threshold, self.encoder, self.latent_dim)

    def objective(self) -> ObjectiveHandle:
        if self.latent_dim is None:
            raise ValueError("latent_dim is required to build an objective")
        return ObjectiveHandle(self.fitness, self.latent_dim, batched=True)


@dataclass(frozen=True)
class CombinedProblem:
    """Several verification models over the same subjects; a match needs all of them."""

    problems: Sequence[VerificationProblem] = field(default_factory=tuple)

    def __post_init__(self):
        problems = tuple(self.problems)
        if not problems:
            raise ValueError("need at least one model")
        ids = problems[0].subject_ids
        if any(p.subject_ids != ids for p in problems[1:]):
            raise ValueError("all models must enroll the same subjects in the same order")
        object.__setattr__(self, "problems", problems)

    @property
    def n_subjects(self) -> int:
        return self.problems[0].n_subjects

    @property
    def subject_ids(self) -> tuple:
        return self.problems[0].subject_ids

    @property
    def latent_dim(self) -> int | None:
        return self.problems[0].latent_dim

    @property
    def cluster_gallery(self) -> EmbeddingGallery:
        return self.problems[0].gallery

    def matches(self, Z) -> np.ndarray:
        out = self.problems[0].matches(Z)
        for p in self.problems[1:]:
            out = out & p.matches(Z)
        return out

    fitness = VerificationProblem.fitness
    msc = VerificationProblem.msc
    objective = VerificationProblem.objective

    def restrict(self, indices) -> "CombinedProblem":
        return CombinedProblem(tuple(p.restrict(indices) for p in self.problems))


def coverage_fitness(z, problem) -> float:
    """``1 - (matched subjects)/n`` for a single latent: 0 is full coverage."""
    return float(problem.fitness(np.asarray(z, dtype=float)[None, :])[0])
