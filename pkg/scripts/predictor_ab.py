"""Plain vs predictor-assisted LM-MA-ES, single master, over several worlds.

Each world seed is a full experiment (5 optimizer seeds per optimizer) in
its own output directory; the script then reports the best-of-seeds train
MSC per world and the medians across worlds.

    python3 scripts/predictor_ab.py --worlds 0 1 2 3 4 --out results/ab
    python3 scripts/predictor_ab.py --train-batches 8   # capped predictor training
"""

import argparse
from pathlib import Path

import numpy as np

from mastersample.config import load_config
from mastersample.experiment import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--worlds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", type=Path, default=Path("results/predictor_ab"))
    ap.add_argument("--train-batches", default="none",
                    help="mini-batches per generation, or 'none' for a full epoch")
    args = ap.parse_args()

    plain, helped = [], []
    for w in args.worlds:
        cfg = load_config(text="[optimizer]\nnames = lmmaes, lmmaes+predictor\n"
                               f"[predictor]\ntrain_batches = {args.train_batches}\n", root_seed=w)
        res = {r.optimizer: r for r in run_experiment(cfg, args.out / f"world{w}")}
        plain.append(res["lmmaes"].train_msc)
        helped.append(res["lmmaes+predictor"].train_msc)

    print("\nworld  lmmaes  lmmaes+predictor")
    for w, a, b in zip(args.worlds, plain, helped):
        print(f"{w:>5}  {a:6.2f}  {b:16.2f}")
    print(f"median {np.median(plain):6.2f}  {np.median(helped):16.2f}")
    verdict = "holds" if np.median(helped) >= np.median(plain) else "does not hold"
    print(f"assisted >= plain on the median: {verdict}")


if __name__ == "__main__":
    main()
