"""Plot per-batch weight statistics and validation accuracy from telemetry files.

    python scripts/plot_weights.py run_a.jsonl run_b.jsonl --out weights.png
"""

import argparse
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def load(path):
    rows = [json.loads(line) for line in Path(path).read_text().splitlines()]
    return [r for r in rows if r.get("kind") == "batch"]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("telemetry", nargs="+")
    ap.add_argument("--group", default="exc_exc")
    ap.add_argument("--out", default="weights.png")
    args = ap.parse_args()

    fig, (ax_w, ax_a) = plt.subplots(1, 2, figsize=(10, 4))
    for path in args.telemetry:
        rows = load(path)
        if not rows:
            continue
        b = [r["batch"] for r in rows]
        label = f"{rows[0]['model']} r={rows[0]['sleep_ratio']} s={rows[0]['seed']}"
        if "weights" in rows[0]:
            ax_w.plot(b, [r["weights"][args.group]["mean"] for r in rows], label=label + " mean")
            ax_w.plot(b, [abs(r["weights"][args.group]["max"]) for r in rows], "--",
                      label=label + " max")
        else:
            ax_w.plot(b, [r.get("max_abs_weight", float("nan")) for r in rows], label=label)
        ax_a.plot(b, [r["val_accuracy"] for r in rows], marker="o", label=label)
    ax_w.set(xlabel="batch", ylabel=f"|w| ({args.group})")
    ax_a.set(xlabel="batch", ylabel="validation accuracy", ylim=(0, 1))
    ax_w.legend(fontsize=7)
    ax_a.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(args.out, dpi=120)
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
