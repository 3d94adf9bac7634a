"""Sleep-wake scheduling and the homeostatic sleep operator.

Every ``sleep_interval`` wake steps the simulation pauses for up to
``max(1, round(sleep_ratio * sleep_interval))`` virtual iterations.  During
those, external input is silenced, membranes are driven by noise alone and
every plastic weight is pulled toward ``w_tgt`` in log-magnitude::

    |w| <- w_tgt * (|w| / w_tgt) ** lam

Sleep ends early once the summed absolute weight falls to
``alpha_base * W_ref``, where ``W_ref`` is the sum at the start of training
(or at phase entry, if configured).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np


class Phase(str, enum.Enum):
    WAKE = "wake"
    SLEEP = "sleep"


class WakeReason(str, enum.Enum):
    THRESHOLD = "threshold"
    BUDGET = "budget"


@dataclass(frozen=True)
class SleepSchedule:
    sleep_ratio: float = 0.1
    sleep_interval: int = 40_000
    lam: float = 0.9997
    w_tgt: float = 0.2
    alpha_base: float = 1.0
    # Accepted for completeness; onset is purely periodic.
    alpha_trig: float | None = None
    # "initial": weight sum at the start of training; "entry": at each phase entry.
    reference: str = "initial"

    def __post_init__(self):
        if not 0.0 <= self.sleep_ratio <= 1.0:
            raise ValueError("sleep_ratio must lie in [0, 1]")
        if self.sleep_interval < 1:
            raise ValueError("sleep_interval must be >= 1")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError("lam must lie in (0, 1]")
        if self.w_tgt <= 0 or self.alpha_base <= 0:
            raise ValueError("w_tgt and alpha_base must be positive")
        if self.alpha_trig is not None and not self.alpha_base < self.alpha_trig:
            raise ValueError("alpha_base must be below alpha_trig")
        if self.reference not in ("initial", "entry"):
            raise ValueError("reference must be 'initial' or 'entry'")


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def sleep_budget(schedule: SleepSchedule) -> int:
    if schedule.sleep_ratio == 0:
        return 0
    return max(1, round_half_away(schedule.sleep_ratio * schedule.sleep_interval))


def decay_step(w, schedule: SleepSchedule | None = None, *, w_tgt=None, lam=None):
    """One power-law step toward ``w_tgt``; sign is kept and zeros stay zero."""
    w_tgt = schedule.w_tgt if w_tgt is None else w_tgt
    lam = schedule.lam if lam is None else lam
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("non-finite weight passed to decay_step")
    if lam == 1.0:  # exact identity, avoids rounding in the power form
        return float(w) if w.ndim == 0 else w.copy()
    mag = np.abs(w)
    with np.errstate(divide="ignore"):
        new = np.where(mag > 0, w_tgt * np.power(mag / w_tgt, lam), 0.0)
    out = np.sign(w) * new
    return float(out) if out.ndim == 0 else out


def decay_n(w, n: int, w_tgt: float, lam: float):
    """``n`` decay steps at once (the exponent composes to ``lam ** n``)."""
    return decay_step(w, w_tgt=w_tgt, lam=lam ** n)


def wake_condition(weight_sum_now: float, weight_sum_initial: float,
                   schedule: SleepSchedule) -> bool:
    if weight_sum_initial <= 0:
        raise ValueError("reference weight sum must be positive")
    return weight_sum_now <= schedule.alpha_base * weight_sum_initial


def wake_sleep_scheduler(step: int, schedule: SleepSchedule) -> Phase:
    if step < 0:
        raise ValueError("step index must be non-negative")
    if sleep_budget(schedule) == 0 or step == 0:
        return Phase.WAKE
    return Phase.SLEEP if step % schedule.sleep_interval == 0 else Phase.WAKE


@dataclass
class SleepRecord:
    phase: int
    step: int
    budget: int
    iterations: int
    weight_sum_before: float
    weight_sum_after: float
    wake_reason: WakeReason

    def to_json(self) -> dict:
        d = asdict(self)
        d["wake_reason"] = WakeReason(self.wake_reason).value
        return d


@dataclass
class SleepTelemetry:
    records: list[SleepRecord] = field(default_factory=list)

    def add(self, rec: SleepRecord):
        self.records.append(rec)

    def wake_counts(self) -> dict[str, int]:
        counts = {r.value: 0 for r in WakeReason}
        for rec in self.records:
            counts[WakeReason(rec.wake_reason).value] += 1
        return counts

    def write_jsonl(self, path, extra: dict | None = None):
        with open(path, "a") as f:
            for rec in self.records:
                row = {"kind": "sleep", **(extra or {}), **rec.to_json()}
                f.write(json.dumps(row) + "\n")


class Sleeper(Protocol):
    """What a model must offer to be put to sleep."""

    def weight_abs_sum(self) -> float: ...

    def sleep_iterations(self, budget: int, schedule: SleepSchedule, threshold: float,
                         learn: bool, rng: np.random.Generator) -> tuple[int, bool]: ...


def sleep_phase(model: Sleeper, schedule: SleepSchedule, stdp_enabled: bool,
                rng: np.random.Generator, reference_sum: float | None = None, *,
                step: int = 0, telemetry: SleepTelemetry | None = None) -> SleepRecord:
    """Run one sleep phase in place on ``model`` and return its record.

    ``reference_sum`` is the summed |w| that the wake bound is relative to; it
    defaults to the sum at phase entry.
    """
    budget = sleep_budget(schedule)
    before = model.weight_abs_sum()
    ref = before if (reference_sum is None or schedule.reference == "entry") else reference_sum
    threshold = schedule.alpha_base * ref
    iterations, woke = 0, False
    if budget > 0:
        iterations, woke = model.sleep_iterations(budget, schedule, threshold,
                                                  stdp_enabled, rng)
    after = model.weight_abs_sum()
    rec = SleepRecord(
        phase=len(telemetry.records) if telemetry is not None else 0,
        step=step, budget=budget, iterations=iterations,
        weight_sum_before=before, weight_sum_after=after,
        wake_reason=WakeReason.THRESHOLD if woke else WakeReason.BUDGET,
    )
    if telemetry is not None:
        telemetry.add(rec)
    return rec
