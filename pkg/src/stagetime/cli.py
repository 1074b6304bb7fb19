"""Command-line surface: train, ablate, gradcheck, macs, export-embeddings.

Every run writes a manifest (resolved config, seeds, version, timestamp)
into the output directory before any work starts.  Summary records contain
no timing, so a rerun with the same arguments reproduces them byte for
byte; wall-clock numbers go to a separate timing file.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Failures print a
single "error: ..." line to stderr.
"""

import argparse
import datetime
import json
import os
import sys

from . import __version__, configs, ts_io
from .data import synth_pair
from .errors import StagetimeError
from .gradcheck import group_errors, tiny_model_check
from .model import StageTimeModel, count_macs, score_context_macs, write_embeddings_csv
from .training import run_repeats

SYNTH_KINDS = ("multiscale-motif", "order-motif", "longrange")
POS_AXIS = ("none", "static", "learnable", "contextual")


def build_parser():
    parser = argparse.ArgumentParser(prog="stagetime", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train/evaluate on a .ts pair or a synthetic task")
    _add_data_args(train)
    _add_run_args(train)
    train.add_argument("--save-checkpoint", action="store_true",
                       help="store the first seed's trained weights in the run directory")

    ablate = sub.add_parser("ablate", help="sweep one axis, everything else fixed")
    ablate.add_argument("--axis", required=True, choices=("stages", "slice", "pos"))
    ablate.add_argument("--stage-counts", default="1,2,3,4",
                        help="settings for --axis stages (comma-separated)")
    ablate.add_argument("--slice-sizes", default="16,8,4,2",
                        help="first-stage window sizes for --axis slice")
    _add_data_args(ablate)
    _add_run_args(ablate)

    grad = sub.add_parser("gradcheck", help="finite-difference check on a tiny model")
    grad.add_argument("--eps", type=float, default=1e-4, help="central-difference step")
    grad.add_argument("--tolerance", type=float, default=1e-3)

    macs = sub.add_parser("macs", help="multiply-accumulate breakdown for a config")
    macs.add_argument("--config", default="default")
    macs.add_argument("--length", type=int, required=True)
    macs.add_argument("--channels", type=int, required=True)
    macs.add_argument("--classes", type=int, default=2)
    macs.add_argument("--compare-r", action="store_true",
                      help="also print score+context cost against the unreduced baseline")
    macs.add_argument("overrides", nargs="*", metavar="path=value")

    exp = sub.add_parser("export-embeddings", help="pooled features of a dataset to CSV")
    exp.add_argument("--checkpoint", required=True)
    exp.add_argument("--out", required=True, help="CSV path")
    _add_data_args(exp)
    exp.add_argument("overrides", nargs="*", metavar="path=value")

    return parser


def _add_data_args(p):
    p.add_argument("--config", default="default", help="bundled name or JSON path")
    p.add_argument("--train-file", help=".ts training split")
    p.add_argument("--test-file", help=".ts test split")
    p.add_argument("--synth", choices=SYNTH_KINDS, help="generate a synthetic task instead")
    p.add_argument("--synth-n", type=int, default=200, help="train samples per split")
    p.add_argument("--synth-test", type=int, help="test samples (default: same as --synth-n)")
    p.add_argument("--synth-l", type=int, default=128)
    p.add_argument("--synth-m", type=int, default=3)
    p.add_argument("--synth-classes", type=int, default=2)
    p.add_argument("--synth-noise", type=float, default=1.0)
    p.add_argument("--synth-seed", type=int, default=0)


def _add_run_args(p):
    p.add_argument("--seeds", type=int, default=5, help="number of repeat seeds (0, 1, ...)")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--out", default="runs/latest", help="run directory")
    p.add_argument("overrides", nargs="*", metavar="path=value",
                   help="config overrides, e.g. train.lr=0.01 stage1.slice.size=16")


def load_datasets(args, parser):
    if args.synth is None and args.train_file is None:
        parser.error("provide --synth KIND or --train-file/--test-file")
    if args.synth is not None:
        n_test = args.synth_test if args.synth_test is not None else args.synth_n
        return synth_pair(args.synth, args.synth_n, n_test, args.synth_m, args.synth_l,
                          args.synth_classes, seed=args.synth_seed, noise=args.synth_noise)
    if args.test_file is None:
        parser.error("--train-file requires --test-file")
    for path in (args.train_file, args.test_file):
        if not os.path.isfile(path):
            parser.error(f"no such file: {path}")
    return ts_io.parse_ts_file(args.train_file), ts_io.parse_ts_file(args.test_file)


def resolve_configs(args, train_ds):
    tree = configs.load_config(args.config)
    configs.apply_overrides(tree, getattr(args, "overrides", []))
    model_cfg = configs.model_config_from_dict(tree, train_ds.channels, train_ds.num_classes)
    extra = {"seeds": tuple(range(args.seeds))}
    if args.max_epochs is not None:
        extra["max_epochs"] = args.max_epochs
    train_cfg = configs.train_config_from_dict(tree, **extra)
    return model_cfg, train_cfg


def write_manifest(out_dir, command, args, model_cfg, train_cfg):
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "command": command,
        "argv": [a for a in args if a is not None],
        "config": configs.resolved_dict(model_cfg, train_cfg),
        "seeds": list(train_cfg.seeds),
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    _dump_json(os.path.join(out_dir, "manifest.json"), manifest)


def _dump_json(path, obj):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_run_records(out_dir, summary_obj, reports):
    with open(os.path.join(out_dir, "epochs.jsonl"), "w", encoding="utf-8") as f:
        for report in reports:
            for e in report.epochs:
                f.write(json.dumps(
                    {"seed": report.seed, "epoch": e.epoch, "loss": e.loss,
                     "accuracy": e.accuracy}, sort_keys=True) + "\n")
    _dump_json(os.path.join(out_dir, "summary.json"), summary_obj)
    _dump_json(os.path.join(out_dir, "timing.json"),
               {"wall_clock_per_seed": [r.wall_clock for r in reports],
                "total": sum(r.wall_clock for r in reports)})


def cmd_train(args, parser, argv):
    train_ds, test_ds = load_datasets(args, parser)
    model_cfg, train_cfg = resolve_configs(args, train_ds)
    write_manifest(args.out, "train", argv, model_cfg, train_cfg)

    result = run_repeats(model_cfg, train_ds, test_ds, train_cfg,
                         keep_models=args.save_checkpoint)
    summary = {"command": "train", "dataset": train_ds.name,
               "results": result.summary_dict()}
    _write_run_records(args.out, summary, result.reports)
    if args.save_checkpoint:
        result.models[0].save(os.path.join(args.out, "checkpoint.bin"))

    print(f"dataset {train_ds.name}: n={train_ds.n}/{test_ds.n} m={train_ds.channels} "
          f"l={train_ds.length} classes={train_ds.num_classes}")
    for r in result.reports:
        print(f"seed {r.seed}: best accuracy {r.best_accuracy:.4f} (epoch {r.best_epoch}), "
              f"final {r.final_accuracy:.4f}")
    print(f"mean best accuracy {result.mean_accuracy:.4f} +- {result.std_accuracy:.4f} "
          f"over {len(result.reports)} seeds")
    return 0


def _stage_axis_settings(tree, counts):
    """Rebuild the stage list for each stage count, keeping the total number
    of encoder layers constant (rounding spread over the first stages)."""
    base = tree["stages"]
    total_layers = sum(s["layers"] for s in base)
    settings = []
    for k in counts:
        layers = [total_layers // k] * k
        for i in range(total_layers % k):
            layers[i] += 1
        stages = []
        for i in range(k):
            src = base[min(i, len(base) - 1)]
            stage = json.loads(json.dumps(src))
            stage["layers"] = layers[i]
            stages.append(stage)
        settings.append((str(k), stages))
    return settings


def cmd_ablate(args, parser, argv):
    train_ds, test_ds = load_datasets(args, parser)
    tree = configs.load_config(args.config)
    configs.apply_overrides(tree, args.overrides)

    variants = []
    if args.axis == "stages":
        counts = [int(v) for v in args.stage_counts.split(",")]
        for label, stages in _stage_axis_settings(tree, counts):
            t = json.loads(json.dumps(tree))
            t["stages"] = stages
            variants.append((label, t))
    elif args.axis == "slice":
        sizes = [int(v) for v in args.slice_sizes.split(",")]
        for size in sizes:
            t = json.loads(json.dumps(tree))
            t["stages"][0]["slice"]["size"] = size
            t["stages"][0]["slice"]["stride"] = size
            scale = 1
            label_parts = []
            for s in t["stages"]:
                scale *= s["slice"]["stride"]
                label_parts.append(str(scale))
            variants.append(("[" + ",".join(label_parts) + "]", t))
    else:
        for mode in POS_AXIS:
            t = json.loads(json.dumps(tree))
            t.setdefault("pos", {})["mode"] = mode
            variants.append((mode, t))

    model_cfg0, train_cfg = resolve_configs(args, train_ds)
    write_manifest(args.out, f"ablate-{args.axis}", argv, model_cfg0, train_cfg)

    rows = []
    all_reports = []
    for label, t in variants:
        model_cfg = configs.model_config_from_dict(t, train_ds.channels, train_ds.num_classes)
        result = run_repeats(model_cfg, train_ds, test_ds, train_cfg)
        rows.append({"setting": label, "mean_accuracy": result.mean_accuracy,
                     "std_accuracy": result.std_accuracy,
                     "runs": [r.summary_dict() for r in result.reports]})
        all_reports.extend(result.reports)

    summary = {"command": f"ablate-{args.axis}", "dataset": train_ds.name, "settings": rows}
    _write_run_records(args.out, summary, all_reports)

    width = max(len(r["setting"]) for r in rows)
    print(f"axis: {args.axis} ({len(train_cfg.seeds)} seeds each)")
    for r in rows:
        print(f"  {r['setting']:<{width}}  mean {r['mean_accuracy']:.4f}  "
              f"+- {r['std_accuracy']:.4f}")
    return 0


def cmd_gradcheck(args, parser):
    if args.eps <= 0:
        parser.error(f"--eps must be > 0, got {args.eps}")
    errors = tiny_model_check(h=args.eps)
    worst = 0.0
    for group, err in sorted(group_errors(errors).items()):
        print(f"{group:<40s} {err:.3e}")
        worst = max(worst, err)
    verdict = "PASS" if worst < args.tolerance else "FAIL"
    print(f"max relative error {worst:.3e} ({verdict} at tolerance {args.tolerance:g})")
    return 0 if worst < args.tolerance else 1


def cmd_macs(args, parser):
    tree = configs.load_config(args.config)
    configs.apply_overrides(tree, args.overrides)
    cfg = configs.model_config_from_dict(tree, args.channels, args.classes)
    counts = count_macs(cfg, args.length)
    length = args.length
    for i, stage in enumerate(counts["stages"], start=1):
        print(f"stage {i}: tokens {stage['tokens']}  partition {stage['partition']}  "
              f"positional {stage['positional']}  "
              f"per-block attn {stage['attention_per_block']['total']} "
              f"ffn {stage['ffn_per_block']}  x{stage['blocks']}  total {stage['total']}")
    print(f"classifier: {counts['classifier']}")
    print(f"total: {counts['total']} ({counts['total'] / 1e6:.2f}M)")

    if args.compare_r:
        base = score_context_macs(cfg, length, reduction=1)
        print("\nscore+context cost vs no reduction:")
        print(f"  {'R':>3} {'macs':>14} {'ratio':>9}")
        for r in (1, 2, 4, 8):
            macs_r = score_context_macs(cfg, length, reduction=r)
            print(f"  {r:>3} {macs_r:>14} {macs_r / base:>9.4f}")
    return 0


def cmd_export_embeddings(args, parser):
    if args.synth is None and args.train_file is None:
        parser.error("provide --synth KIND or --train-file")
    if args.synth is not None:
        dataset, _ = load_datasets(args, parser)
    else:
        if not os.path.isfile(args.train_file):
            parser.error(f"no such file: {args.train_file}")
        dataset = ts_io.parse_ts_file(args.train_file)
    if not os.path.isfile(args.checkpoint):
        parser.error(f"no such file: {args.checkpoint}")

    tree = configs.load_config(args.config)
    configs.apply_overrides(tree, getattr(args, "overrides", []))
    model_cfg = configs.model_config_from_dict(tree, dataset.channels, dataset.num_classes)
    model = StageTimeModel(model_cfg)
    model.load(args.checkpoint)
    write_embeddings_csv(args.out, model, dataset)
    print(f"wrote {dataset.n} rows x {2 + model.cfg.last_channels} columns to {args.out}")
    return 0


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(args, parser, argv)
        if args.command == "ablate":
            return cmd_ablate(args, parser, argv)
        if args.command == "gradcheck":
            return cmd_gradcheck(args, parser)
        if args.command == "macs":
            return cmd_macs(args, parser)
        if args.command == "export-embeddings":
            return cmd_export_embeddings(args, parser)
        parser.error(f"unknown command {args.command}")
    except StagetimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
