"""Command line entry point: ``snn-sleep {generate-geometric,run,sweep,summarize}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 run failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import DEFAULT_SEEDS, SLEEP_GRID, ExperimentConfig, load_config
from .datasets import DATA_ENV, DataFormatError, CapacityError, dataset_root, generate_geometric, write_idx
from .experiment import run_experiment
from .sweep import CSVSink, summarize, sweep

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUN = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _list(cast):
    def parse(text):
        try:
            return [cast(x) for x in text.replace(" ", "").split(",") if x]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc))
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="snn-sleep", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="INI config file")
        sp.add_argument("--dataset-root", help=f"dataset directory (default ${DATA_ENV} or ./data)")
        sp.add_argument("--out", type=Path)

    g = sub.add_parser("generate-geometric", help="write the geometric toy set as IDX files")
    common(g)
    g.add_argument("--n", type=int, default=7100)
    g.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run", help="run a single configuration")
    common(r)
    r.add_argument("--model", choices=("stdp", "sg"))
    r.add_argument("--dataset")
    r.add_argument("--seed", type=int)
    r.add_argument("--sleep-ratio", type=float)
    r.add_argument("--telemetry", type=Path, help="JSON-lines telemetry file")

    s = sub.add_parser("sweep", help="run a grid of configurations")
    common(s)
    s.add_argument("--models", type=_list(str), default=["stdp", "sg"])
    s.add_argument("--datasets", type=_list(str), default=["mnist"])
    s.add_argument("--seeds", type=_list(int), default=list(DEFAULT_SEEDS))
    s.add_argument("--sleep-ratios", type=_list(float), default=list(SLEEP_GRID))
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--resume", action="store_true")
    s.add_argument("--telemetry-dir", type=Path)

    m = sub.add_parser("summarize", help="mean accuracy and 95% CI per model and sleep ratio")
    m.add_argument("csv", type=Path)
    m.add_argument("--out", type=Path, help="plot-ready summary CSV")
    return p


def _base_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else ExperimentConfig()
    root = args.dataset_root or os.environ.get(DATA_ENV) or cfg.dataset_root
    return cfg.with_(dataset_root=root)


def _generate(args) -> int:
    root = dataset_root(args.out or args.dataset_root)
    directory = root / "geometric"
    directory.mkdir(parents=True, exist_ok=True)
    data = generate_geometric(args.n, rng=np.random.default_rng(args.seed))
    write_idx(data, directory / "geometric-images-idx3-ubyte",
              directory / "geometric-labels-idx1-ubyte")
    print(f"wrote {len(data)} images to {directory}")
    return EXIT_OK


def _run(args) -> int:
    cfg = _base_config(args)
    over = {k: v for k, v in dict(model=args.model, dataset=args.dataset, seed=args.seed,
                                  sleep_ratio=args.sleep_ratio).items() if v is not None}
    cfg = cfg.with_(**over)
    res = run_experiment(cfg, telemetry_path=args.telemetry,
                         progress=lambda rec: print(f"batch {rec.batch:2d}  val {rec.val_accuracy:.4f}"
                                                    f"  {rec.wall_time_s:7.1f}s", flush=True))
    print(f"test accuracy {res.final.test_accuracy:.4f}  status {res.status}"
          + (f" ({res.reason})" if res.reason else ""))
    if args.out:
        CSVSink(args.out, fresh=False).write(res.final.row())
    return EXIT_OK if res.status == "ok" else EXIT_RUN


def _sweep(args) -> int:
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    base = _base_config(args)
    bad = [r for r in args.sleep_ratios if round(r, 6) not in SLEEP_GRID]
    if bad and not base.allow_off_grid:
        raise UsageError(f"sleep ratios off the 0.0..1.0 grid: {bad}")
    out = args.out or Path("results.csv")
    res = sweep(base, args.models, args.datasets, args.seeds, args.sleep_ratios, out,
                jobs=args.jobs, resume=args.resume, telemetry_dir=args.telemetry_dir)
    print(f"{res.written} rows written, {res.skipped} skipped, {len(res.failed)} failed, "
          f"{len(res.aborted)} aborted -> {out}")
    return EXIT_RUN if res.failed or res.aborted else EXIT_OK


def _summarize(args) -> int:
    if not args.csv.exists():
        raise UsageError(f"{args.csv} not found")
    summarize(args.csv, args.out, stream=sys.stdout)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"generate-geometric": _generate, "run": _run, "sweep": _sweep,
               "summarize": _summarize}[args.command]
    try:
        return handler(args)
    except (FileNotFoundError, DataFormatError, CapacityError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
