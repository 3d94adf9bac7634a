"""Grid sweeps over (model, dataset, seed, sleep_ratio) with a resumable CSV.

Each finished run appends one row (its final record) to the CSV.  Only the
parent process writes, so workers never contend for the file.  On resume the
keys already present are skipped.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import multiprocessing as mp
import os
import traceback
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .config import ExperimentConfig
from .experiment import CSV_FIELDS, run_experiment

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ("model", "sleep_ratio", "n", "mean", "std", "ci_low", "ci_high")
Z95 = 1.959963984540054


def run_key(model, dataset, seed, ratio) -> tuple:
    return (str(model), str(dataset), int(seed), round(float(ratio), 6))


def read_rows(path) -> list[dict]:
    path = Path(path)
    if not path.exists() or path.stat().st_size == 0:
        return []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return list(reader)


def completed_keys(path) -> set:
    return {run_key(r["model"], r["dataset"], r["seed"], r["sleep_ratio"]) for r in read_rows(path)}


def _fmt(v):
    return repr(float(v)) if isinstance(v, float) else v


class CSVSink:
    """Append-only writer; writes the header when the file is new or empty."""

    def __init__(self, path, fresh: bool):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if fresh or not self.path.exists() or self.path.stat().st_size == 0:
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(CSV_FIELDS)

    def write(self, row: dict):
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow([_fmt(row[k]) for k in CSV_FIELDS])
            f.flush()
            os.fsync(f.fileno())


@dataclass
class SweepOutcome:
    written: int
    skipped: int
    failed: list  # (key, message)
    aborted: list  # (key, reason) for runs stopped by the weight ceiling


def _job(args):
    cfg, telemetry_dir = args
    key = run_key(cfg.model, cfg.dataset, cfg.seed, cfg.sleep_ratio)
    tpath = None
    if telemetry_dir:
        tpath = Path(telemetry_dir) / (f"{cfg.model}_{cfg.dataset}_s{cfg.seed}_"
                                       f"r{cfg.sleep_ratio:.1f}.jsonl")
        tpath.unlink(missing_ok=True)
    try:
        res = run_experiment(cfg, telemetry_path=tpath)
        return key, res.final.row(), res.status, res.reason
    except Exception as exc:  # recorded, the sweep carries on
        return key, None, "failed", f"{type(exc).__name__}: {exc}\n{traceback.format_exc()}"


def grid(base: ExperimentConfig, models, datasets, seeds, ratios) -> list[ExperimentConfig]:
    return [base.with_(model=m, dataset=d, seed=int(s), sleep_ratio=float(r))
            for m, d, s, r in itertools.product(models, datasets, seeds, ratios)]


def sweep(base: ExperimentConfig, models, datasets, seeds, ratios, out, jobs: int = 1,
          resume: bool = False, telemetry_dir=None, runner=None) -> SweepOutcome:
    configs = grid(base, models, datasets, seeds, ratios)
    if not configs:
        raise ValueError("empty sweep grid")
    done = completed_keys(out) if resume else set()
    todo = [c for c in configs
            if run_key(c.model, c.dataset, c.seed, c.sleep_ratio) not in done]
    sink = CSVSink(out, fresh=not resume)
    if telemetry_dir:
        Path(telemetry_dir).mkdir(parents=True, exist_ok=True)
    fail_log = Path(str(out) + ".failures.jsonl")
    outcome = SweepOutcome(0, len(configs) - len(todo), [], [])
    job = runner or _job
    args = [(c, telemetry_dir) for c in todo]
    if jobs > 1 and len(args) > 1:
        ctx = mp.get_context("spawn" if os.name == "nt" else "fork")
        with ctx.Pool(min(jobs, len(args))) as pool:
            results = pool.imap_unordered(job, args)
            _collect(results, sink, fail_log, outcome)
    else:
        _collect(map(job, args), sink, fail_log, outcome)
    return outcome


def _collect(results, sink, fail_log, outcome):
    for key, row, status, reason in results:
        if row is None:
            outcome.failed.append((key, reason))
            log.error("run %s failed: %s", key, reason.splitlines()[0])
        else:
            sink.write(row)
            outcome.written += 1
            if status != "ok":
                outcome.aborted.append((key, reason))
        if status != "ok":
            with open(fail_log, "a") as f:
                f.write(json.dumps({"key": list(key), "status": status, "reason": reason}) + "\n")


# -- summary ------------------------------------------------------------------------------

def summarize_rows(rows) -> list[dict]:
    """Mean and normal-approximation 95% CI of test accuracy per (model, sleep_ratio)."""
    groups = defaultdict(list)
    for r in rows:
        acc = float(r["test_accuracy"])
        if math.isfinite(acc):
            groups[(r["model"], round(float(r["sleep_ratio"]), 6))].append(acc)
    out = []
    for (model, ratio), accs in sorted(groups.items()):
        n = len(accs)
        mean = math.fsum(accs) / n
        std = math.sqrt(math.fsum((a - mean) ** 2 for a in accs) / (n - 1)) if n > 1 else 0.0
        half = Z95 * std / math.sqrt(n)
        out.append(dict(model=model, sleep_ratio=ratio, n=n, mean=mean, std=std,
                        ci_low=mean - half, ci_high=mean + half))
    return out


def summarize(csv_path, out=None, stream=None) -> list[dict]:
    rows = read_rows(csv_path)
    if not rows:
        raise ValueError(f"{csv_path}: no rows to summarize")
    table = summarize_rows(rows)
    if stream is not None:
        print(f"{'model':<6} {'ratio':>5} {'n':>3} {'mean':>7} {'95% CI':>17}", file=stream)
        for t in table:
            print(f"{t['model']:<6} {t['sleep_ratio']:>5.1f} {t['n']:>3d} {t['mean']:>7.4f} "
                  f"[{t['ci_low']:.4f}, {t['ci_high']:.4f}]", file=stream)
    if out:
        with open(out, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=SUMMARY_FIELDS)
            w.writeheader()
            w.writerows(table)
    return table
