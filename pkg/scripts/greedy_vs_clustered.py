"""Greedy dictionary search against the per-cluster baseline.

Two parts:

* ``--exact N``: N small worlds (50 identities) where the inner search is
  exhaustive over the enrolled embeddings, so only the outer strategy
  differs.
* ``--worlds``: default worlds with LM-MA-ES as the inner search, through
  the experiment runner (nine masters each way).
"""

import argparse
from pathlib import Path

import numpy as np

from mastersample.config import load_config
from mastersample.coverage import (
    VerificationProblem,
    clustered_coverage_search,
    greedy_coverage,
    threshold_at_eer,
)
from mastersample.experiment import run_experiment
from mastersample.synthworld import WorldConfig, build_world


def best_gallery_point(problem, seed, iteration):
    E = problem.gallery.embeddings
    return E[int(np.argmax(problem.matches(E).sum(axis=1)))]


def exact(n_worlds: int, k: int, metric: str) -> None:
    wins, gaps = 0, []
    for seed in range(n_worlds):
        world = build_world(WorldConfig(n_identities=50, seed=seed, metric=metric))
        theta, _ = threshold_at_eer(world.scores)
        p = VerificationProblem(world.gallery, theta, np.atleast_2d, world.gallery.embeddings.shape[1])
        g = greedy_coverage(p, k, best_gallery_point, seeds=[0]).cumulative_coverage
        c = clustered_coverage_search(p, k, best_gallery_point, seeds=[0], cluster_seed=seed).cumulative_coverage
        wins += g >= c
        gaps.append(g - c)
    print(f"exact inner search, {metric}, k={k}: greedy >= clustered in {wins}/{n_worlds} worlds, "
          f"mean gap {np.mean(gaps):+.2f} points")


def optimized(worlds, out: Path, optimizer: str) -> None:
    print("\nworld  greedy  clustered")
    wins = 0
    for w in worlds:
        cov = {}
        for mode in ("greedy", "clustered"):
            cfg = load_config(text=f"[optimizer]\nnames = {optimizer}\n[coverage]\nmode = {mode}\n", root_seed=w)
            cov[mode] = run_experiment(cfg, out / f"{mode}{w}")[0].train_msc
        wins += cov["greedy"] >= cov["clustered"]
        print(f"{w:>5}  {cov['greedy']:6.2f}  {cov['clustered']:9.2f}")
    print(f"greedy >= clustered in {wins}/{len(worlds)} worlds")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--exact", type=int, default=50, help="number of small exact-search worlds (0 to skip)")
    ap.add_argument("--k", type=int, default=9)
    ap.add_argument("--metric", default="euclidean", choices=("euclidean", "cosine"))
    ap.add_argument("--worlds", type=int, nargs="*", default=[0, 1, 2, 3, 4])
    ap.add_argument("--optimizer", default="lmmaes")
    ap.add_argument("--out", type=Path, default=Path("results/greedy_vs_clustered"))
    args = ap.parse_args()
    if args.exact:
        exact(args.exact, args.k, args.metric)
    if args.worlds:
        optimized(args.worlds, args.out, args.optimizer)


if __name__ == "__main__":
    main()
