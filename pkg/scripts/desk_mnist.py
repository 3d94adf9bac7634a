"""Desk-scale MNIST sweep (600 train / 100 val / 200 test) for both models.

    python scripts/desk_mnist.py --out results/desk.csv --jobs 1

Writes one CSV row per run and prints the per-(model, ratio) summary.
"""

import argparse
import sys

from snn_sleep import ExperimentConfig
from snn_sleep.datasets import SplitPlan
from snn_sleep.sweep import summarize, sweep

DESK = SplitPlan(n_train=600, n_val=100, n_test=200, batch_size=40, n_batches=15)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results/desk.csv")
    ap.add_argument("--models", nargs="+", default=["stdp", "sg"])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.0, 0.1, 1.0])
    ap.add_argument("--dataset-root", default=None)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--resume", action="store_true")
    args = ap.parse_args()

    base = ExperimentConfig(dataset="mnist", split=DESK, dataset_root=args.dataset_root)
    res = sweep(base, args.models, ["mnist"], args.seeds, args.ratios, args.out,
                jobs=args.jobs, resume=args.resume)
    print(f"{res.written} written, {res.skipped} skipped, {len(res.failed)} failed, "
          f"{len(res.aborted)} aborted")
    summarize(args.out, stream=sys.stdout)


if __name__ == "__main__":
    main()
