"""Command-line pipeline: synth -> stats -> sample -> split -> train -> predict -> eval.

Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
stderr as a single line; output files never contain timestamps or host
details, so identical inputs and seeds give identical output bytes.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import EndokitError
from .manifest import compute_stats, read_manifest, write_manifest, write_stats_report
from .metrics import (
    DEFAULT_THRESHOLDS,
    display_round,
    evaluate_files,
    write_predictions,
    write_report,
)
from .sampler import SamplingConfig, attach_frame_labels, read_plan, under_sample, split_train_val, write_plan
from .trainer import load_train_config, predict, train, write_loss_curve
from .vit import load_checkpoint


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _thresholds(text: str) -> list[float]:
    try:
        values = [float(part) for part in text.split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad threshold list: {text!r}")
    if not values or any(not 0.0 <= t <= 1.0 for t in values):
        raise argparse.ArgumentTypeError(f"thresholds must be in [0, 1]: {text!r}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="endokit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset statistics report from a manifest")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True, help="stats report JSON path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample", help="run the balancing under-sampler")
    p.add_argument("manifest")
    p.add_argument("--target", type=int, default=3000, help="per-class selection target")
    p.add_argument("--min-full-cardinality", type=int, default=4,
                   help="label count at which frames are always kept")
    p.add_argument("--val-fraction", type=float, default=0.2,
                   help="validation fraction recorded in the plan config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="selection plan JSON path")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("split", help="populate the train/validation split of a plan")
    p.add_argument("plan")
    p.add_argument("--manifest", required=True, help="manifest the plan was sampled from")
    p.add_argument("--val-fraction", type=float, default=None,
                   help="override the plan's validation fraction")
    p.add_argument("--seed", type=int, default=None, help="override the plan's seed")
    p.add_argument("-o", "--output", default=None, help="output path (default: rewrite plan)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the toy classifier on a split plan")
    p.add_argument("plan")
    p.add_argument("--config", required=True, help="train config TOML or JSON")
    p.add_argument("--manifest", required=True, help="manifest the plan was sampled from")
    p.add_argument("--loss-curve", default=None, help="optional loss curve CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score manifest frames with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True, help="prediction CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="per-video and overall mAP report")
    p.add_argument("predictions")
    p.add_argument("manifest")
    p.add_argument("--thresholds", type=_thresholds, default=list(DEFAULT_THRESHOLDS))
    p.add_argument("-o", "--output", required=True, help="evaluation report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic manifest")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--videos", type=int, default=3)
    p.add_argument("-o", "--output", required=True, help="manifest CSV path")
    p.set_defaults(func=cmd_synth)
    return parser


def cmd_stats(args) -> int:
    manifest = read_manifest(args.manifest)
    stats = compute_stats(manifest)
    write_stats_report(stats, args.output)
    print(f"{stats.total_frames} frames, "
          f"{sum(stats.per_label_count.values())} label assignments -> {args.output}")
    return 0


def cmd_sample(args) -> int:
    manifest = read_manifest(args.manifest)
    cfg = SamplingConfig(
        target_per_class=args.target,
        full_inclusion_min_cardinality=args.min_full_cardinality,
        validation_fraction=args.val_fraction,
        seed=args.seed,
    )
    plan = under_sample(manifest, cfg)
    write_plan(plan, args.output)
    print(f"selected {len(plan.selected)} of {len(manifest.records)} frames -> {args.output}")
    return 0


def cmd_split(args) -> int:
    plan = read_plan(args.plan)
    manifest = read_manifest(args.manifest)
    attach_frame_labels(plan, manifest)
    cfg = plan.config
    if args.val_fraction is not None:
        cfg = replace(cfg, validation_fraction=args.val_fraction)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    result = split_train_val(plan, cfg)
    out = args.output or args.plan
    write_plan(result, out)
    print(f"train {len(result.train)} / validation {len(result.validation)} -> {out}")
    return 0


def cmd_train(args) -> int:
    plan = read_plan(args.plan)
    manifest = read_manifest(args.manifest)
    attach_frame_labels(plan, manifest)
    cfg = load_train_config(args.config)
    params, losses = train(plan, cfg)
    if args.loss_curve:
        write_loss_curve(losses, args.loss_curve)
    print(f"trained {cfg.epochs} epochs, final mean loss {losses[-1]:.6f} -> {cfg.checkpoint_path}")
    return 0


def cmd_predict(args) -> int:
    params, model_cfg = load_checkpoint(args.checkpoint)
    manifest = read_manifest(args.manifest)
    pred = predict(params, model_cfg, manifest)
    write_predictions(pred, args.output)
    print(f"{len(pred.rows)} prediction rows -> {args.output}")
    return 0


def cmd_eval(args) -> int:
    report = evaluate_files(args.predictions, args.manifest, args.thresholds)
    write_report(report, args.output)
    header = "video_id" + "".join(f"  mAP@{format(t, 'g')}" for t in report.thresholds)
    print(header)
    for video_id in sorted(report.per_video):
        row = report.per_video[video_id]
        print(video_id + "".join(f"  {display_round(row.map_at[t])}" for t in report.thresholds))
    print("overall" + "".join(f"  {display_round(report.overall[t])}" for t in report.thresholds))
    return 0


def cmd_synth(args) -> int:
    from .synth import synthesize_manifest

    if args.frames < 1:
        raise EndokitError("--frames must be >= 1")
    manifest = synthesize_manifest(args.frames, args.seed, args.videos)
    write_manifest(manifest, args.output)
    print(f"{len(manifest.records)} synthetic frames, "
          f"{len({r.video_id for r in manifest.records})} videos -> {args.output}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        return args.func(args)
    except EndokitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
