"""Command-line entry points: gen-synthetic, train, evaluate, diagnose."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from .config import TrainConfig, load_config
from .synth import GrammarConfig, gen_synthetic, write_jsonl


def _setup_logging():
    level = os.environ.get("KPSET_VERBOSITY", "info").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format="%(message)s")


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, help="flat KEY=VALUE config file")
    for f in fields(TrainConfig):
        default = getattr(TrainConfig(), f.name)
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, bool):
            parser.add_argument(flag, action="store_true", default=None)
        else:
            parser.add_argument(flag, type=type(default), default=None)


def _resolve_config(args) -> TrainConfig:
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(TrainConfig)
        if getattr(args, f.name) is not None
    }
    if args.config:
        return load_config(args.config, overrides)
    return TrainConfig(**overrides)


def _cmd_gen_synthetic(args) -> int:
    records = gen_synthetic(args.seed, args.size, GrammarConfig())
    write_jsonl(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .trainloop import train

    cfg = _resolve_config(args)
    ckpt = train(cfg, args.corpus, args.out)
    print(f"checkpoint written to {ckpt}")
    return 0


def _cmd_evaluate(args) -> int:
    from .trainloop import evaluate

    report = evaluate(args.checkpoint, args.corpus)
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    print(report.table())
    return 0


def _cmd_diagnose(args) -> int:
    from .trainloop import diagnose, format_diagnostics

    report = diagnose(
        args.checkpoint,
        args.log,
        args.corpus,
        compare_log=args.compare_log,
        interval=(args.conf_lo, args.conf_hi),
        bin_width=args.bin_width,
    )
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(format_diagnostics(report))
    return 0


def main(argv=None) -> int:
    _setup_logging()
    parser = argparse.ArgumentParser(prog="kpset", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic keyphrase corpus")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--size", type=int, default=500)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a corpus")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("diagnose", help="emit calibration and assignment diagnostics")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--corpus", type=Path, required=True)
    p.add_argument("--log", type=Path, help="training log with trace records")
    p.add_argument("--compare-log", type=Path, help="second log for entropy comparison")
    p.add_argument("--conf-lo", type=float, default=0.0)
    p.add_argument("--conf-hi", type=float, default=0.2)
    p.add_argument("--bin-width", type=float, default=0.02)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=_cmd_diagnose)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
