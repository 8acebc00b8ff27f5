"""LM-MA-ES against random search on the 512-d sphere at the attack budget."""

import argparse

import numpy as np

from mastersample.evostrat import LMMAES, ObjectiveHandle, RandomSearch, RunBudget, run_optimizer


def sphere(Z):
    return np.sum(Z * Z, axis=1)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=512)
    ap.add_argument("--budget", type=int, default=26400)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = ap.parse_args()

    print("seed  initial     lmmaes      random")
    for s in args.seeds:
        es = run_optimizer(LMMAES(args.dim, seed=s), ObjectiveHandle(sphere, args.dim, batched=True),
                           RunBudget(args.budget, s))
        rs = run_optimizer(RandomSearch(args.dim, seed=s), ObjectiveHandle(sphere, args.dim, batched=True),
                           RunBudget(args.budget, s))
        print(f"{s:>4}  {es.trace[0]:9.3g}  {es.best_fitness:9.3g}  {rs.best_fitness:9.3g}")


if __name__ == "__main__":
    main()
