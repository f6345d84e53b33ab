"""Command-line entry point: the whole pipeline or one stage at a time."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, pipeline
from .config import ConfigError, PipelineConfig, load_config
from .dataset import DataError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

STAGE_COMMANDS = {
    "preprocess": (pipeline.stage_split, pipeline.stage_preprocess),
    "score-features": (pipeline.stage_score_features,),
    "autofs": (pipeline.stage_autofs,),
    "cash": (pipeline.stage_cash,),
    "train": (pipeline.stage_train,),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value settings file")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker cap for candidate evaluation")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any setting")

    parser = argparse.ArgumentParser(prog="automl-ids", description="Automated intrusion-detection model building.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (("pipeline", "run every stage"), ("preprocess", "split, normalize and balance")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("--data", help="input CSV")
        p.add_argument("--label-column")
    for name, help_ in (
        ("score-features", "information gain per feature"),
        ("autofs", "feature-subset search"),
        ("cash", "learner and hyperparameter search"),
        ("train", "refit the chosen configuration"),
    ):
        sub.add_parser(name, parents=[common], help=help_)
    p = sub.add_parser("evaluate", parents=[common], help="score the held-out split")
    p.add_argument("--predictions", help="stored probability CSV to evaluate instead of the model")
    p = sub.add_parser("predict", parents=[common], help="score a new CSV with a trained model")
    p.add_argument("input", help="CSV with the training feature columns (label column optional)")
    p.add_argument("--output", help="prediction CSV (default: <out>/predictions.csv)")
    p.add_argument("--label-column")
    return parser


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    overrides: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip().replace("-", "_")] = v
    for flag, key in (("seed", "seed"), ("threads", "threads"), ("out", "out"), ("data", "dataset"), ("label_column", "label_column")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = str(v)
    cfg = load_config(args.config, overrides)
    if args.command in ("pipeline", "preprocess"):
        return cfg
    # later stages resume with the settings the workspace was created with
    stored = Path(cfg.out) / pipeline.CONFIG
    if not stored.is_file():
        return cfg
    return load_config(args.config, overrides, json.loads(stored.read_text(encoding="utf-8")))


def run(args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    ws = pipeline.Workspace(cfg.out)
    if args.command == "pipeline":
        report, _ = pipeline.run_pipeline(cfg)
        print(f"weighted F1 {report['f1_weighted']:.5f}  accuracy {report['accuracy']:.5f}  ECE {report['ece']:.5f}")
        print(f"artifacts in {ws.root}")
    elif args.command in STAGE_COMMANDS:
        for fn in STAGE_COMMANDS[args.command]:
            fn(cfg, ws)
        print(f"{args.command}: done ({ws.root})")
    elif args.command == "evaluate":
        report = pipeline.stage_evaluate(cfg, ws, predictions=args.predictions)
        print(json.dumps({k: report[k] for k in ("accuracy", "f1_weighted", "ece")}, sort_keys=True))
    elif args.command == "predict":
        out = args.output or str(ws.path("predictions.csv"))
        acc = pipeline.predict_csv(cfg, ws, args.input, out)
        print(f"predictions written to {out}" + (f"; accuracy {acc:.5f}" if acc is not None else ""))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return run(args)
    except ConfigError as exc:
        print(f"automl-ids: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as exc:
        print(f"automl-ids: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except pipeline.StageError as exc:
        print(f"automl-ids: internal failure {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        print(f"automl-ids: internal failure: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
