"""Geometric toy experiment: sleep vs no sleep for a few seeds.

    python scripts/toy_run.py --seeds 1 2 --ratios 0.0 0.1 [--no-ceiling]

``--no-ceiling`` disables the weight-explosion abort so that both conditions
train to the end, which shows where the weights settle.
"""

import argparse
from dataclasses import replace

import numpy as np

from snn_sleep import ExperimentConfig, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[1])
    ap.add_argument("--ratios", type=float, nargs="+", default=[0.0, 0.1])
    ap.add_argument("--dataset-root", default=None)
    ap.add_argument("--no-ceiling", action="store_true")
    ap.add_argument("--telemetry-dir", default=None)
    args = ap.parse_args()

    base = ExperimentConfig(dataset="geometric", dataset_root=args.dataset_root)
    if args.no_ceiling:
        base = base.with_(network=replace(base.network, safety_factor=np.inf))
    for ratio in args.ratios:
        accs = []
        for seed in args.seeds:
            tel = (f"{args.telemetry_dir}/toy_s{seed}_r{ratio:.1f}.jsonl"
                   if args.telemetry_dir else None)
            res = run_experiment(base.with_(seed=seed, sleep_ratio=ratio), telemetry_path=tel)
            accs.append(res.final.test_accuracy)
            print(f"ratio {ratio:.1f} seed {seed}: test {res.final.test_accuracy:.4f} "
                  f"status {res.status} batches {len(res.records)} "
                  f"max|w| {res.max_abs_weight:.3f} "
                  f"({res.max_abs_weight / res.initial_mean_abs_weight:.1f}x initial mean) "
                  f"{res.final.wall_time_s:.0f}s", flush=True)
        print(f"ratio {ratio:.1f}: mean test {np.mean(accs):.4f}")


if __name__ == "__main__":
    main()
