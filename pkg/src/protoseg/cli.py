"""Command-line entry points: train / eval / predict / synth / report.

Exit codes: 0 success, 2 configuration error (including usage errors),
3 data error, 4 numerical abort during training.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .cloud import load_cloud, save_cloud, synth_scene
from .config import Config, apply_overrides, load_config
from .errors import ConfigError, DataError, NumericalAbort
from .reports import (
    format_metrics_table,
    read_train_log,
    report_plots,
    write_metrics_csv,
    write_predictions_csv,
)
from .trainer import (
    Trainer,
    evaluate_run,
    load_checkpoint,
    predict_categories,
    prepare_cloud,
    resolve_categories,
)

# dedicated flags and the config key each one overrides
_FLAG_KEYS = (
    ("seed", "train.seed"),
    ("epochs", "train.epochs"),
    ("tau", "train.tau"),
    ("lr", "train.lr"),
)


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI config file (defaults used when omitted)")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[],
        metavar="SECTION.KEY=VALUE", help="override any config key (repeatable)",
    )
    p.add_argument("--seed", type=int, help="override train.seed")
    p.add_argument("--epochs", type=int, help="override train.epochs")
    p.add_argument("--tau", type=float, help="override train.tau")
    p.add_argument("--lr", type=float, help="override train.lr")


def _load_cfg(args: argparse.Namespace) -> Config:
    overrides = list(args.overrides)
    for flag, key in _FLAG_KEYS:
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    if args.config:
        return load_config(args.config, overrides)
    return apply_overrides(Config(), overrides)


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    trainer = Trainer(cfg)
    log = trainer.run(args.out)
    final = log.records[-1]
    print(f"trained {cfg.epochs} epochs; artifacts in {args.out}")
    print(
        f"final loss {final.loss_total:.4f}, "
        f"consistent fraction {final.consistent_fraction:.3f}"
    )
    if trainer.n_skipped_steps:
        print(f"warning: {trainer.n_skipped_steps} optimizer steps skipped", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    checkpoint = load_checkpoint(args.checkpoint)
    _, preds, report = evaluate_run(cfg, checkpoint)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    for i, labels in enumerate(preds):
        write_predictions_csv(labels, out / f"predictions_scene{i}.csv")
    if report is None:
        print(f"no ground truth available; wrote predictions only to {out}")
    else:
        write_metrics_csv(report, out / "metrics.csv")
        print(format_metrics_table(report))
    return 0


def cmd_predict(args) -> int:
    cfg = _load_cfg(args)
    checkpoint = load_checkpoint(args.checkpoint)
    scene = prepare_cloud(load_cloud(args.cloud), cfg)
    n_categories = resolve_categories(cfg, [scene])
    preds = predict_categories(
        checkpoint.params, checkpoint.consistent_bank, [scene], n_categories, cfg.seed
    )
    write_predictions_csv(preds[0], args.out)
    print(f"wrote {preds[0].size} predictions to {args.out}")
    return 0


def cmd_synth(args) -> int:
    scale = tuple(args.class_noise_scale) if args.class_noise_scale else None
    cloud = synth_scene(
        args.classes, args.points_per_class, args.separation, args.noise, args.seed,
        class_noise_scale=scale,
    )
    save_cloud(cloud, args.out)
    print(f"wrote {cloud.n_points} points, {args.classes} classes, to {args.out}")
    return 0


def cmd_report(args) -> int:
    log = read_train_log(args.log)
    prototypes = None
    if args.checkpoint:
        prototypes = load_checkpoint(args.checkpoint).consistent_bank.vectors
    for path in report_plots(log, args.outdir, prototypes, args.temperature):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="protoseg",
        description="Unsupervised point-cloud semantic segmentation with dual "
        "prototype memories.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for debug output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint + log")
    _add_config_args(p)
    p.add_argument("--out", default="protoseg_run", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on the config's test scenes")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="output directory (default: beside the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="label one cloud file with a checkpoint")
    _add_config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cloud", required=True, help="CSV or ascii-PLY cloud")
    p.add_argument("--out", default="predictions.csv")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("synth", help="generate a synthetic labeled scene")
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--points-per-class", type=int, default=400)
    p.add_argument("--separation", type=float, default=1.2)
    p.add_argument("--noise", type=float, default=0.18)
    p.add_argument("--class-noise-scale", type=float, nargs="*",
                   help="per-class noise multipliers, one value per class")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", help="render SVG diagnostics from a train log")
    p.add_argument("--log", required=True, help="train_log.csv from a run")
    p.add_argument("--outdir", required=True)
    p.add_argument("--checkpoint", help="also render the prototype-similarity heatmap")
    p.add_argument("--temperature", type=float, default=0.1)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (
        logging.DEBUG if args.verbose > 1
        else logging.INFO if args.verbose
        else logging.WARNING
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
