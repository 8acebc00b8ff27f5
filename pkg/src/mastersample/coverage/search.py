"""Dictionary construction: greedy coverage search and the per-cluster baseline."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .kmeans import kmeans
from .matching import match_matrix

# inner(problem, seed, iteration) -> best latent found for that problem
InnerSearch = Callable[[object, int, int], np.ndarray]


class CoverageSearchError(RuntimeError):
    """An inner optimization failed; ``report`` holds the masters found so far."""

    def __init__(self, message: str, report: "CoverageReport"):
        super().__init__(message)
        self.report = report


def latent_checksum(latent) -> str:
    a = np.ascontiguousarray(np.asarray(latent, dtype=np.float64))
    return hashlib.sha256(a.tobytes()).hexdigest()[:16]


@dataclass
class CoverageEntry:
    latent: np.ndarray
    embedding: np.ndarray | None
    marginal_msc: float
    covered_ids: tuple


@dataclass
class CoverageReport:
    """Masters in generation order; marginals are percentages of the original gallery."""

    n_total: int
    entries: list[CoverageEntry] = field(default_factory=list)

    @property
    def cumulative_coverage(self) -> float:
        return 100.0 * sum(len(e.covered_ids) for e in self.entries) / self.n_total

    @property
    def marginals(self) -> list[float]:
        return [e.marginal_msc for e in self.entries]

    @property
    def latents(self) -> np.ndarray:
        return np.array([e.latent for e in self.entries])

    def records(self) -> list[dict]:
        out, covered = [], 0
        for i, e in enumerate(self.entries):
            covered += len(e.covered_ids)
            out.append({
                "index": i,
                "marginal_msc": e.marginal_msc,
                "cumulative": 100.0 * covered / self.n_total,
                "covered_ids": [_jsonable(s) for s in e.covered_ids],
                "latent_checksum": latent_checksum(e.latent),
                "latent": [float(v) for v in np.asarray(e.latent, dtype=float)],
            })
        return out

    def save(self, path) -> None:
        """One JSON record per master, preceded by a header line."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(json.dumps({"n_total": self.n_total}) + "\n")
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    @classmethod
    def load(cls, path) -> "CoverageReport":
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        report = cls(n_total=int(lines[0]["n_total"]))
        for rec in lines[1:]:
            latent = np.array(rec["latent"], dtype=float)
            if latent_checksum(latent) != rec["latent_checksum"]:
                raise ValueError(f"{path}: latent checksum mismatch in record {rec['index']}")
            report.entries.append(CoverageEntry(latent, None, float(rec["marginal_msc"]), tuple(rec["covered_ids"])))
        return report


def _jsonable(x):
    return x.item() if isinstance(x, np.generic) else x


def _best_of_seeds(problem, inner: InnerSearch, seeds: Sequence[int], iteration: int):
    """Run ``inner`` once per seed; keep the latent with the highest MSC on ``problem``."""
    best_latent, best_count = None, -1
    for seed in seeds:
        z = np.asarray(inner(problem, seed, iteration), dtype=float)
        count = int(problem.matches(z[None, :])[0].sum())
        if count > best_count:
            best_latent, best_count = z, count
    return best_latent


def _embedding_of(problem, z) -> np.ndarray | None:
    encode = getattr(problem, "encode", None)
    return None if encode is None else encode(z[None, :])[0]


def greedy_coverage(problem, max_iter: int, inner: InnerSearch, seeds: Sequence[int] = range(5)) -> CoverageReport:
    """Repeatedly optimize a master against the not-yet-covered subjects.

    Each iteration runs ``inner`` for every seed on the reduced problem,
    keeps the run with the highest MSC, removes the subjects it matches and
    records them as that master's marginal set. Iterations matching nothing
    still produce an (empty) entry. The search stops early once every
    subject is covered.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    n_total = problem.n_subjects
    report = CoverageReport(n_total)
    remaining = np.arange(n_total)
    for it in range(max_iter):
        if remaining.size == 0:
            break
        reduced = problem.restrict(remaining)
        try:
            z = _best_of_seeds(reduced, inner, seeds, it)
        except Exception as exc:
            raise CoverageSearchError(f"inner search failed at iteration {it}: {exc}", report) from exc
        hit = reduced.matches(z[None, :])[0]
        covered = tuple(reduced.subject_ids[i] for i in np.flatnonzero(hit))
        report.entries.append(CoverageEntry(z, _embedding_of(problem, z), float(100.0 * hit.sum() / n_total), covered))
        remaining = remaining[~hit]
    return report


def clustered_coverage_search(
    problem,
    k: int,
    inner: InnerSearch,
    seeds: Sequence[int] = range(5),
    cluster_seed: int = 0,
    max_rounds: int = 100,
) -> CoverageReport:
    """Per-cluster baseline: one master optimized for each k-means cluster.

    Masters are credited in cluster order against the full gallery, each
    only for subjects not already matched by an earlier master.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    seeds = list(seeds)
    gallery = problem.cluster_gallery
    _, assign = kmeans(gallery.embeddings, k, metric=gallery.metric, seed=cluster_seed, max_rounds=max_rounds)
    n_total = problem.n_subjects
    report = CoverageReport(n_total)
    covered_mask = np.zeros(n_total, dtype=bool)
    for c in range(k):
        members = np.flatnonzero(assign == c)
        if members.size == 0:
            continue
        try:
            z = _best_of_seeds(problem.restrict(members), inner, seeds, c)
        except Exception as exc:
            raise CoverageSearchError(f"inner search failed on cluster {c}: {exc}", report) from exc
        hit = problem.matches(z[None, :])[0] & ~covered_mask
        covered_mask |= hit
        covered = tuple(problem.subject_ids[i] for i in np.flatnonzero(hit))
        report.entries.append(CoverageEntry(z, _embedding_of(problem, z), float(100.0 * hit.sum() / n_total), covered))
    return report


def centroid_coverage(gallery, centroids, threshold: float) -> float:
    """Percentage of subjects within ``threshold`` of at least one centroid."""
    centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
    if centroids.shape[0] == 0:
        raise ValueError("need at least one centroid")
    hit = match_matrix(centroids, gallery, threshold).any(axis=0)
    return 100.0 * int(hit.sum()) / len(gallery)
