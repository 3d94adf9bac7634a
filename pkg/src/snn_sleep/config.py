"""Experiment configuration and the flat key-value config file format.

A config file is INI-style.  Each section maps to one parameter block and
every key is the name of one dataclass field::

    [experiment]
    model = stdp
    dataset = geometric
    seed = 1
    sleep_ratio = 0.1

    [neuro-dynamics]
    tau_m = 30
    ...

Unknown sections or keys are an error, omitted keys keep their defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, fields, replace

from .datasets import SplitPlan
from .encoding import EncoderConfig
from .network import NetworkParams
from .neurons import LIFParams, ThresholdParams
from .plasticity import STDPParams
from .sg import SGConfig
from .sleep import SleepSchedule

SLEEP_GRID = tuple(round(0.1 * k, 1) for k in range(11))
DEFAULT_SEEDS = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class ReadoutConfig:
    retain_variance: float = 0.95
    reg_strength: float = 1e-4
    max_iters: int = 2000
    tol: float = 1e-5
    # 0 fits on every training batch seen so far, n > 0 on the last n batches only
    window: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "stdp"
    dataset: str = "geometric"
    seed: int = 1
    sleep_ratio: float = 0.1
    # None: one stimulus (STDP, in ms steps) or one batch (SG, in optimizer steps)
    sleep_interval: int | None = None
    noise_during_wake: bool = True
    stdp_during_sleep: bool = True
    patience_fraction: float = 0.2
    min_improvement: float = 0.001
    dataset_root: str | None = None
    allow_off_grid: bool = False
    network: NetworkParams = field(default_factory=NetworkParams)
    lif: LIFParams = field(default_factory=LIFParams)
    threshold: ThresholdParams = field(default_factory=ThresholdParams)
    stdp: STDPParams = field(default_factory=STDPParams)
    sleep: SleepSchedule = field(default_factory=SleepSchedule)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    split: SplitPlan = field(default_factory=SplitPlan)
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    sg: SGConfig = field(default_factory=SGConfig)

    def __post_init__(self):
        if self.model not in ("stdp", "sg"):
            raise ValueError("model must be 'stdp' or 'sg'")
        if not self.allow_off_grid and round(self.sleep_ratio, 6) not in SLEEP_GRID:
            raise ValueError(f"sleep_ratio {self.sleep_ratio} is not on the 0.0..1.0 grid; "
                             "set allow_off_grid to override")

    def with_(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)

    def schedule(self, default_interval: int) -> SleepSchedule:
        interval = self.sleep_interval or default_interval
        return replace(self.sleep, sleep_ratio=self.sleep_ratio, sleep_interval=interval)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Stable hash of everything except the seed."""
        d = self.to_dict()
        d.pop("seed")
        return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


# section name in the file -> attribute on ExperimentConfig (None = top level)
SECTIONS = {
    "experiment": None,
    "network": "network",
    "neuro-dynamics": "lif",
    "threshold": "threshold",
    "stdp": "stdp",
    "sleep/homeostasis": "sleep",
    "input encoding": "encoder",
    "data processing": "split",
    "readout": "readout",
    "sg-snn": "sg",
}


def _parse(raw: str, default, name: str):
    raw = raw.strip()
    if isinstance(default, bool):
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if raw.lower() in ("none", ""):
        return None
    if isinstance(default, tuple):
        return tuple(int(x) for x in raw.strip("()[] ").split(",") if x.strip())
    if isinstance(default, int) and not isinstance(default, bool):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    try:
        return int(raw)
    except ValueError:
        try:
            return float(raw)
        except ValueError:
            return raw


def _defaults(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


def load_config(path, **overrides) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    with open(path) as f:
        parser.read_file(f)
    base = ExperimentConfig(allow_off_grid=True)
    top, blocks = {}, {}
    for section in parser.sections():
        key = section.strip().lower()
        if key not in SECTIONS:
            raise ValueError(f"unknown config section [{section}]")
        attr = SECTIONS[key]
        target = base if attr is None else getattr(base, attr)
        defaults = _defaults(target)
        values = {}
        for k, raw in parser.items(section):
            if k not in defaults:
                raise ValueError(f"unknown key {k!r} in [{section}]")
            values[k] = _parse(raw, defaults[k], k)
        if attr is None:
            top.update(values)
        else:
            blocks[attr] = replace(target, **values)
    top.setdefault("allow_off_grid", False)
    top.update(overrides)
    return replace(base, **blocks, **top)


def dump_config(cfg: ExperimentConfig, path):
    parser = configparser.ConfigParser()
    parser.optionxform = str
    for section, attr in SECTIONS.items():
        obj = cfg if attr is None else getattr(cfg, attr)
        items = {}
        for f in fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                continue
            items[f.name] = "none" if v is None else (
                ",".join(map(str, v)) if isinstance(v, tuple) else str(v))
        parser[section] = items
    with open(path, "w") as f:
        parser.write(f)
