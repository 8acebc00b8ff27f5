"""Synthetic identity world standing in for a generator plus face descriptor.

A fixed random tanh network maps latents to embeddings. Identities are drawn
from a Gaussian mixture in latent space so that, as with real faces, some
regions of embedding space are crowded and a few well-placed samples can
match many enrolled subjects.

Worlds are never stored as matrices: a :class:`WorldConfig` (which includes
the seed) regenerates everything bit-exactly.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np

from .coverage.matching import CombinedProblem, EmbeddingGallery, VerificationProblem
from .coverage.thresholds import PairScores


@dataclass(frozen=True)
class WorldConfig:
    latent_dim: int = 512
    embedding_dim: int = 128
    hidden_dim: int = 256
    # latent directions the encoder actually reads; the rest are ignored,
    # like the many identity-irrelevant directions of a face generator
    identity_dim: int = 8
    n_identities: int = 500
    cluster_count: int = 10
    # share of latent variance carried by the cluster centres; the rest is
    # per-identity spread, so anchors stay roughly standard normal
    separation: float = 0.6
    probe_noise: float = 0.5
    metric: str = "euclidean"
    n_impostor_pairs: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.n_identities < 2:
            raise ValueError("need at least two identities")
        if self.cluster_count < 1:
            raise ValueError("need at least one cluster")
        if not 0 <= self.separation < 1:
            raise ValueError("separation must be in [0, 1)")
        if self.probe_noise < 0:
            raise ValueError("probe_noise must be non-negative")
        if self.metric not in ("euclidean", "cosine"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.n_impostor_pairs < 1:
            raise ValueError("need at least one impostor pair")
        if not 1 <= self.identity_dim <= self.latent_dim:
            raise ValueError("identity_dim must be in [1, latent_dim]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "WorldConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown world settings: {sorted(unknown)}")
        return cls(**d)


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


class SyntheticEncoder:
    """``z -> W2 tanh(W1 Pᵀz + b1) + b2``, optionally projected to the unit sphere.

    ``P`` has ``identity_dim`` orthonormal columns, so standard-normal
    latents map to standard-normal identity coordinates.
    """

    def __init__(self, latent_dim: int, embedding_dim: int, hidden_dim: int, seed: int,
                 normalize: bool = False, identity_dim: int | None = None):
        rng = np.random.default_rng(seed)
        r = latent_dim if identity_dim is None else identity_dim
        self.latent_dim = latent_dim
        self.embedding_dim = embedding_dim
        self.normalize = normalize
        self.seed = seed
        self.P = np.linalg.qr(rng.standard_normal((latent_dim, r)))[0]
        self.W1 = rng.standard_normal((r, hidden_dim)) / np.sqrt(r)
        self.b1 = 0.1 * rng.standard_normal(hidden_dim)
        self.W2 = rng.standard_normal((hidden_dim, embedding_dim)) / np.sqrt(hidden_dim)
        self.b2 = 0.1 * rng.standard_normal(embedding_dim)

    def encode_raw(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return np.tanh((Z @ self.P) @ self.W1 + self.b1) @ self.W2 + self.b2

    def __call__(self, Z) -> np.ndarray:
        E = self.encode_raw(Z)
        if self.normalize:
            E = E / np.linalg.norm(E, axis=1, keepdims=True)
        return E

    def lipschitz_bound(self) -> float:
        """Euclidean Lipschitz constant of :meth:`encode_raw` (tanh is 1-Lipschitz)."""
        return float(np.linalg.norm(self.P, 2) * np.linalg.norm(self.W1, 2) * np.linalg.norm(self.W2, 2))


@dataclass
class World:
    config: WorldConfig
    encoder: SyntheticEncoder
    gallery: EmbeddingGallery
    scores: PairScores
    anchors: np.ndarray
    probes: np.ndarray
    labels: np.ndarray  # mixture component of each identity
    centers: np.ndarray
    impostor_pairs: np.ndarray  # (n_pairs, 2): probe identity, enrolled identity

    def problem(self, threshold: float, subjects=None) -> VerificationProblem:
        gallery = self.gallery if subjects is None else self.gallery.subset(subjects)
        return VerificationProblem(gallery, threshold, self.encoder, self.config.latent_dim)

    def pair_scores(self, subjects=None) -> PairScores:
        """Genuine/impostor distances restricted to pairs whose identities are all in ``subjects``."""
        if subjects is None:
            return self.scores
        keep = np.zeros(self.config.n_identities, dtype=bool)
        keep[np.asarray(subjects)] = True
        gen = self.scores.genuine[keep]
        imp = self.scores.impostor[keep[self.impostor_pairs[:, 0]] & keep[self.impostor_pairs[:, 1]]]
        return PairScores(gen, imp)

    def checksum(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.gallery.embeddings).tobytes()).hexdigest()


def _population(config: WorldConfig, rng: np.random.Generator):
    n, dim, k = config.n_identities, config.latent_dim, config.cluster_count
    centers = np.sqrt(config.separation) * rng.standard_normal((k, dim))
    labels = rng.integers(k, size=n)
    anchors = centers[labels] + np.sqrt(1.0 - config.separation) * rng.standard_normal((n, dim))
    probes = anchors + config.probe_noise * rng.standard_normal((n, dim))
    i = rng.integers(n, size=config.n_impostor_pairs)
    j = (i + rng.integers(1, n, size=config.n_impostor_pairs)) % n
    return centers, labels, anchors, probes, np.stack([i, j], axis=1)


def _scores(encoder, anchors, probes, pairs, metric) -> tuple[EmbeddingGallery, PairScores]:
    E = encoder(anchors)
    P = encoder(probes)
    gallery = EmbeddingGallery(E, metric)
    if metric == "euclidean":
        genuine = np.linalg.norm(P - E, axis=1)
        impostor = np.linalg.norm(P[pairs[:, 0]] - E[pairs[:, 1]], axis=1)
    else:
        Pn = P / np.linalg.norm(P, axis=1, keepdims=True)
        En = E / np.linalg.norm(E, axis=1, keepdims=True)
        impostor = 0.5 * np.sum((Pn[pairs[:, 0]] - En[pairs[:, 1]]) ** 2, axis=1)
        genuine = 0.5 * np.sum((Pn - En) ** 2, axis=1)
    return gallery, PairScores(genuine, impostor)


def build_world(config: WorldConfig) -> World:
    """Encoder, enrolled gallery and calibration pairs for ``config``."""
    if config.probe_noise == 0:
        warnings.warn("probe_noise=0: genuine distances are all zero, EER will be 0", stacklevel=2)
    pop_rng, enc_rng = _streams(config.seed, 2)
    centers, labels, anchors, probes, pairs = _population(config, pop_rng)
    encoder = SyntheticEncoder(
        config.latent_dim, config.embedding_dim, config.hidden_dim,
        seed=int(enc_rng.integers(2**63)), normalize=config.metric == "cosine",
        identity_dim=config.identity_dim,
    )
    gallery, scores = _scores(encoder, anchors, probes, pairs, config.metric)
    return World(config, encoder, gallery, scores, anchors, probes, labels, centers, pairs)


@dataclass
class PairedWorld:
    """Two models over the same identities, probes and pair lists."""

    a: World
    b: World

    @property
    def n_identities(self) -> int:
        return self.a.config.n_identities

    def problem(self, theta_a: float, theta_b: float, subjects=None) -> CombinedProblem:
        return CombinedProblem((self.a.problem(theta_a, subjects), self.b.problem(theta_b, subjects)))


def paired_world(config: WorldConfig, second_seed: int | None = None) -> PairedWorld:
    """Second encoder drawn with an independent weight seed (or ``second_seed``).

    Passing the first world's encoder seed as ``second_seed`` reproduces the
    single-model world exactly.
    """
    a = build_world(config)
    if second_seed is None:
        second_seed = int(np.random.default_rng([config.seed, 1]).integers(2**63))
    enc = SyntheticEncoder(
        config.latent_dim, config.embedding_dim, config.hidden_dim,
        seed=second_seed, normalize=config.metric == "cosine",
        identity_dim=config.identity_dim,
    )
    gallery, scores = _scores(enc, a.anchors, a.probes, a.impostor_pairs, config.metric)
    b = World(config, enc, gallery, scores, a.anchors, a.probes, a.labels, a.centers, a.impostor_pairs)
    return PairedWorld(a, b)
