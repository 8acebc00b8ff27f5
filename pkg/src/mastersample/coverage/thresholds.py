"""FAR/FRR bookkeeping and decision-threshold selection.

All comparisons are strict: a pair is accepted when its distance is ``< θ``.
Thresholds are searched over cut points (observed distances and the
midpoints between consecutive ones), never interpolated.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class ThresholdWarning(UserWarning):
    """The requested operating point cannot be resolved from the data."""


@dataclass(frozen=True)
class PairScores:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "genuine", np.asarray(self.genuine, dtype=float).reshape(-1))
        object.__setattr__(self, "impostor", np.asarray(self.impostor, dtype=float).reshape(-1))

    def check(self) -> None:
        if self.genuine.size == 0 or self.impostor.size == 0:
            raise ValueError("need at least one genuine and one impostor distance")


def far_frr(scores: PairScores, threshold) -> tuple:
    """False-accept and false-reject rates at ``threshold`` (scalar or array)."""
    scores.check()
    imp = np.sort(scores.impostor)
    gen = np.sort(scores.genuine)
    t = np.asarray(threshold, dtype=float)
    far = np.searchsorted(imp, t, side="left") / imp.size
    frr = 1.0 - np.searchsorted(gen, t, side="left") / gen.size
    if t.ndim == 0:
        return float(far), float(frr)
    return far, frr


def _cut_points(values: np.ndarray, above: bool = False) -> np.ndarray:
    u = np.unique(values)
    cuts = np.concatenate([u, (u[:-1] + u[1:]) / 2.0])
    if above:
        cuts = np.append(cuts, np.nextafter(u[-1], np.inf))
    return np.sort(cuts)


def threshold_at_far(scores: PairScores, target_far: float) -> float:
    """Largest cut point whose FAR does not exceed ``target_far``.

    With fewer than ``1/target_far`` impostor pairs the target cannot be
    resolved; the smallest impostor distance is returned and a
    :class:`ThresholdWarning` is emitted.
    """
    if not 0 < target_far <= 1:
        raise ValueError("target_far must be in (0, 1]")
    imp = scores.impostor
    if imp.size == 0:
        raise ValueError("need impostor distances")
    if imp.size < 1.0 / target_far:
        warnings.warn(
            f"{imp.size} impostor pairs cannot resolve FAR={target_far}; using the smallest distance",
            ThresholdWarning,
            stacklevel=2,
        )
        return float(imp.min())
    cuts = _cut_points(imp, above=True)
    far = np.searchsorted(np.sort(imp), cuts, side="left") / imp.size
    return float(cuts[np.flatnonzero(far <= target_far)[-1]])


def threshold_at_eer(scores: PairScores) -> tuple[float, float]:
    """Cut point minimizing ``|FAR - FRR|`` (smallest on ties) and the EER there."""
    scores.check()
    cuts = _cut_points(np.concatenate([scores.genuine, scores.impostor]), above=True)
    far, frr = far_frr(scores, cuts)
    i = int(np.argmin(np.abs(far - frr)))
    return float(cuts[i]), float((far[i] + frr[i]) / 2.0)


def normalize_scores(scores: PairScores, metric: str, scale: float | None = None) -> tuple[PairScores, float]:
    """Map distances into [0, 1]: cosine by /2, euclidean by the observed maximum.

    Returns the rescaled scores and the divisor, so a normalized threshold
    ``t`` corresponds to ``t * scale`` in original units.
    """
    if scale is None:
        if metric == "cosine":
            scale = 2.0
        elif metric == "euclidean":
            scale = float(max(scores.genuine.max(initial=0.0), scores.impostor.max(initial=0.0)))
        else:
            raise ValueError(f"unknown metric {metric!r}")
    if scale <= 0:
        raise ValueError("normalization scale must be positive")
    return PairScores(scores.genuine / scale, scores.impostor / scale), float(scale)


def combined_rates(a: PairScores, b: PairScores, theta_a: float, theta_b: float) -> tuple[float, float]:
    """FAR/FRR when a pair is accepted only if both models accept it."""
    acc_imp = (a.impostor < theta_a) & (b.impostor < theta_b)
    acc_gen = (a.genuine < theta_a) & (b.genuine < theta_b)
    return float(acc_imp.mean()), float(1.0 - acc_gen.mean())


def combined_threshold_grid(a: PairScores, b: PairScores, grid_resolution: int = 100):
    """Grid-search a threshold pair on [0,1]² balancing combined FAR and FRR.

    ``a`` and ``b`` must hold normalized distances for the same pairs in the
    same order. Returns ``(theta_a, theta_b, eer)``; ties go to the smallest
    ``theta_a`` and then the smallest ``theta_b``.
    """
    a.check()
    b.check()
    if a.genuine.shape != b.genuine.shape or a.impostor.shape != b.impostor.shape:
        raise ValueError("pair lists must be aligned between the two models")
    if grid_resolution < 2:
        raise ValueError("grid_resolution must be at least 2")
    grid = np.linspace(0.0, 1.0, grid_resolution)
    n_imp, n_gen = a.impostor.size, a.genuine.size

    best = (np.inf, 0.0, 0.0, 0.0)
    for ta in grid:
        imp_b = np.sort(b.impostor[a.impostor < ta])
        gen_b = np.sort(b.genuine[a.genuine < ta])
        far = np.searchsorted(imp_b, grid, side="left") / n_imp
        frr = 1.0 - np.searchsorted(gen_b, grid, side="left") / n_gen
        gap = np.abs(far - frr)
        j = int(np.argmin(gap))
        if gap[j] < best[0]:
            best = (gap[j], ta, grid[j], (far[j] + frr[j]) / 2.0)
    return float(best[1]), float(best[2]), float(best[3])
