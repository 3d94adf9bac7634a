"""Single-run protocols for the STDP network and the surrogate-gradient baseline.

Both follow the same outline: balanced splits, ``n_batches`` training batches
with sleep phases placed by :func:`wake_sleep_scheduler`, validation after
every batch, patience-based early stopping, and a final test accuracy.

Sleep cadence: the STDP scheduler counts simulation steps (ms) and defaults
to one interval per stimulus (``T_image/dt``), so a short sleep phase precedes
every presentation after the first.  The SG scheduler counts optimizer steps
and defaults to one interval per batch (``batch_size / minibatch``).
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import ExperimentConfig
from .datasets import Splits, balanced_split, load_dataset
from .encoding import poisson_encode
from .network import STDPNetwork
from .plasticity import WeightExplosion
from .readout import aggregate_rates, fit_readout
from .sg import SGModel
from .sleep import Phase, SleepTelemetry, sleep_phase, wake_sleep_scheduler

log = logging.getLogger(__name__)

CSV_FIELDS = ("model", "dataset", "seed", "sleep_ratio", "batch", "val_accuracy",
              "test_accuracy", "wall_time_s", "wake_threshold_count", "wake_budget_count")


@dataclass
class RunRecord:
    model: str
    dataset: str
    seed: int
    sleep_ratio: float
    batch: int
    val_accuracy: float
    test_accuracy: float = float("nan")
    wall_time_s: float = 0.0
    wake_threshold_count: int = 0
    wake_budget_count: int = 0

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}


@dataclass
class RunResult:
    records: list[RunRecord]          # one per completed batch
    final: RunRecord                  # carries the test accuracy
    telemetry: SleepTelemetry
    status: str = "ok"                # "ok" | "aborted"
    reason: str = ""
    stopped_early: bool = False
    max_abs_weight: float = 0.0
    initial_mean_abs_weight: float = 0.0
    weight_history: list[dict] = field(default_factory=list)


class EarlyStopping:
    """Stop after ``patience`` consecutive checks without ``min_delta`` improvement."""

    def __init__(self, patience: int, min_delta: float):
        self.patience = max(1, patience)
        self.min_delta = min_delta
        self.best = -math.inf
        self.wait = 0

    def update(self, value: float) -> bool:
        if value > self.best + self.min_delta:
            self.best = value
            self.wait = 0
        else:
            self.wait += 1
        return self.wait >= self.patience


def patience_batches(cfg: ExperimentConfig) -> int:
    return max(1, int(round(cfg.patience_fraction * cfg.split.n_batches)))


def _streams(seed: int):
    names = ("split", "init", "encode", "noise", "sleep", "eval")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def prepare_splits(cfg: ExperimentConfig) -> Splits:
    pool, test_pool = load_dataset(cfg.dataset, cfg.dataset_root)
    splits = balanced_split(pool, cfg.split, cfg.seed, test_pool)
    return splits.resized(cfg.encoder.image_dims)


def _telemetry_line(path, row: dict):
    if path:
        with open(path, "a") as f:
            f.write(json.dumps(row, default=float) + "\n")


# -- STDP ------------------------------------------------------------------------------------

def _stdp_features(net: STDPNetwork, images, cfg, enc_rng, noise_rng, learn: bool):
    out = np.empty((len(images), net.params.n_exc))
    for k, img in enumerate(images):
        raster = poisson_encode(img, cfg.encoder, enc_rng).T
        counts = net.present(raster, learn=learn, rng=noise_rng)
        out[k] = aggregate_rates(counts, cfg.encoder.T_image)
    return out


def run_stdp_experiment(cfg: ExperimentConfig, splits: Splits | None = None,
                        telemetry_path=None, progress=None) -> RunResult:
    if cfg.model != "stdp":
        raise ValueError("run_stdp_experiment needs model='stdp'")
    t0 = time.perf_counter()
    rngs = _streams(cfg.seed)
    splits = splits or prepare_splits(cfg)
    net = STDPNetwork(cfg.network, cfg.lif, cfg.threshold, cfg.stdp, rngs["init"])
    n_steps = cfg.encoder.n_steps
    schedule = cfg.schedule(n_steps)
    if schedule.sleep_interval % n_steps:
        raise ValueError("sleep_interval must be a multiple of the steps per stimulus")
    telemetry = SleepTelemetry()
    stopper = EarlyStopping(patience_batches(cfg), cfg.min_improvement)
    wake_noise = rngs["noise"] if cfg.noise_during_wake else None
    C = splits.train.class_count

    feats, labels = [], []
    records, history = [], []
    readout = None
    step = 0
    run_max = net.max_abs_weight()
    status, reason, stopped = "ok", "", False
    base = dict(model=cfg.model, dataset=cfg.dataset, seed=cfg.seed, sleep_ratio=cfg.sleep_ratio)

    def fit():
        w = cfg.readout.window
        F = np.concatenate(feats[-w:] if w else feats)
        L = np.concatenate(labels[-w:] if w else labels)
        return fit_readout(F, L, C, cfg.readout.retain_variance, cfg.readout.reg_strength,
                           cfg.readout.max_iters, cfg.readout.tol)

    try:
        for b, batch in enumerate(splits.batches()):
            F = np.empty((len(batch), net.params.n_exc))
            filled = 0
            try:
                for k, img in enumerate(batch.images):
                    if wake_sleep_scheduler(step, schedule) is Phase.SLEEP:
                        sleep_phase(net, schedule, cfg.stdp_during_sleep, rngs["sleep"],
                                    net.initial_weight_sum, step=step, telemetry=telemetry)
                    raster = poisson_encode(img, cfg.encoder, rngs["encode"]).T
                    counts = net.present(raster, learn=True, rng=wake_noise)
                    F[k] = aggregate_rates(counts, cfg.encoder.T_image)
                    filled = k + 1
                    step += n_steps
                    run_max = max(run_max, net.max_abs_weight())
                    net.check_ceiling()
            finally:
                if filled:
                    feats.append(F[:filled])
                    labels.append(batch.labels[:filled])
            readout = fit()
            val_F = _stdp_features(net, splits.val.images, cfg, rngs["eval"],
                                   rngs["eval"] if cfg.noise_during_wake else None, False)
            val_acc = readout.score(val_F, splits.val.labels)
            counts = telemetry.wake_counts()
            rec = RunRecord(**base, batch=b, val_accuracy=val_acc,
                            wall_time_s=time.perf_counter() - t0,
                            wake_threshold_count=counts["threshold"],
                            wake_budget_count=counts["budget"])
            records.append(rec)
            stats = net.weight_stats()
            history.append({"batch": b, **{f"{g}_{s}": v for g, d in stats.items()
                                           for s, v in d.items()}})
            _telemetry_line(telemetry_path, {"kind": "batch", **rec.row(),
                                             "max_abs_weight": net.max_abs_weight(),
                                             "weights": stats})
            if progress:
                progress(rec)
            if stopper.update(val_acc):
                stopped = b + 1 < cfg.split.n_batches
                break
    except WeightExplosion as exc:
        status, reason = "aborted", str(exc)
        log.warning("run %s aborted: %s", base, exc)
        if sum(len(f) for f in feats) >= 2:
            readout = fit()

    if readout is not None:
        test_F = _stdp_features(net, splits.test.images, cfg, rngs["eval"],
                                rngs["eval"] if cfg.noise_during_wake else None, False)
        test_acc = readout.score(test_F, splits.test.labels)
    else:
        test_acc = float("nan")
    counts = telemetry.wake_counts()
    last_val = records[-1].val_accuracy if records else float("nan")
    final = RunRecord(**base, batch=len(records) - 1, val_accuracy=last_val,
                      test_accuracy=test_acc, wall_time_s=time.perf_counter() - t0,
                      wake_threshold_count=counts["threshold"],
                      wake_budget_count=counts["budget"])
    if telemetry_path:
        telemetry.write_jsonl(telemetry_path, base)
        _telemetry_line(telemetry_path, {"kind": "final", **final.row(), "status": status,
                                         "reason": reason})
    return RunResult(records, final, telemetry, status, reason, stopped, run_max,
                     net.initial_mean_abs, history)


# -- SG ----------------------------------------------------------------------------------------

def run_sg_experiment(cfg: ExperimentConfig, splits: Splits | None = None,
                      telemetry_path=None, progress=None) -> RunResult:
    if cfg.model != "sg":
        raise ValueError("run_sg_experiment needs model='sg'")
    t0 = time.perf_counter()
    rngs = _streams(cfg.seed)
    splits = splits or prepare_splits(cfg)
    sgc = cfg.sg
    model = SGModel(sgc, rngs["init"])
    mb = sgc.minibatch
    steps_per_batch = math.ceil(cfg.split.batch_size / mb)
    schedule = cfg.schedule(steps_per_batch)
    schedule = type(schedule)(**{**asdict(schedule), "lam": sgc.lam, "w_tgt": sgc.w_tgt,
                                 "alpha_base": sgc.alpha_base})
    telemetry = SleepTelemetry()
    stopper = EarlyStopping(patience_batches(cfg), cfg.min_improvement)
    base = dict(model=cfg.model, dataset=cfg.dataset, seed=cfg.seed, sleep_ratio=cfg.sleep_ratio)
    Xval, yval = splits.val.flat(), splits.val.labels
    records, history = [], []
    opt_step = 0
    run_max = model.max_abs_weight()
    status, reason, stopped = "ok", "", False
    try:
        for b, batch in enumerate(splits.batches()):
            X, y = batch.flat(), batch.labels
            losses = []
            for s in range(0, len(y), mb):
                if wake_sleep_scheduler(opt_step, schedule) is Phase.SLEEP:
                    sleep_phase(model, schedule, False, rngs["sleep"], model.initial_weight_sum,
                                step=opt_step, telemetry=telemetry)
                losses.append(model.train_minibatch(X[s:s + mb], y[s:s + mb]))
                opt_step += 1
                run_max = max(run_max, model.max_abs_weight())
            val_acc = float(np.mean(model.predict(Xval) == yval))
            counts = telemetry.wake_counts()
            rec = RunRecord(**base, batch=b, val_accuracy=val_acc,
                            wall_time_s=time.perf_counter() - t0,
                            wake_threshold_count=counts["threshold"],
                            wake_budget_count=counts["budget"])
            records.append(rec)
            history.append({"batch": b, "loss": float(np.mean(losses)),
                            "max_abs_weight": model.max_abs_weight()})
            _telemetry_line(telemetry_path, {"kind": "batch", **rec.row(),
                                             "loss": float(np.mean(losses))})
            if progress:
                progress(rec)
            if stopper.update(val_acc):
                stopped = b + 1 < cfg.split.n_batches
                break
    except FloatingPointError as exc:
        status, reason = "aborted", str(exc)
        log.warning("run %s aborted: %s", base, exc)
    test_acc = float(np.mean(model.predict(splits.test.flat()) == splits.test.labels))
    counts = telemetry.wake_counts()
    final = RunRecord(**base, batch=len(records) - 1,
                      val_accuracy=records[-1].val_accuracy if records else float("nan"),
                      test_accuracy=test_acc, wall_time_s=time.perf_counter() - t0,
                      wake_threshold_count=counts["threshold"],
                      wake_budget_count=counts["budget"])
    if telemetry_path:
        telemetry.write_jsonl(telemetry_path, base)
        _telemetry_line(telemetry_path, {"kind": "final", **final.row(), "status": status,
                                         "reason": reason})
    mean_abs = model.initial_weight_sum / sum(w.size for w in model.params.weights)
    return RunResult(records, final, telemetry, status, reason, stopped, run_max, mean_abs,
                     history)


def run_experiment(cfg: ExperimentConfig, **kw) -> RunResult:
    return (run_stdp_experiment if cfg.model == "stdp" else run_sg_experiment)(cfg, **kw)
