"""Command-line interface.

Subcommands: synth, train, eval, predict, sweep, report. Reports and
predictions go to stdout as JSON; progress lines go to stderr. Exit codes:
0 success, 2 usage or configuration problem, 3 runtime failure (non-finite
loss, unreadable files mid-run).
"""

import argparse
import csv
import json
import sys
from pathlib import Path

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    PREPROCESS_MODES,
    load_arrays,
    load_sample,
    load_split_indexes,
    scan_class_tree,
    synth_dataset,
)
from .errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    DecodeError,
    ModelSpecError,
    ShapeError,
    TrainingError,
)
from .losses import LOSS_NAMES
from .metrics import top_k_accuracy
from .model_config import (
    PRESET_NAMES,
    instantiate,
    parse_model_spec,
    preset_config,
)
from .optim import OPTIMIZER_NAMES, OptimizerConfig
from .train import TrainConfig, evaluate, read_history_csv, train

REPORT_METRICS = ("loss", "acc", "prec", "rec")


def _add_optimizer_args(parser):
    parser.add_argument("--optimizer", choices=OPTIMIZER_NAMES, default="adam")
    parser.add_argument("--lr", type=float, default=0.001,
                        help="learning rate (default 0.001)")
    parser.add_argument("--rho", type=float, default=0.9,
                        help="rmsprop decay (default 0.9)")
    parser.add_argument("--beta1", type=float, default=0.9)
    parser.add_argument("--beta2", type=float, default=0.999)
    parser.add_argument("--epsilon", type=float, default=1e-7)


def _add_run_args(parser):
    parser.add_argument("--loss", choices=LOSS_NAMES,
                        default="categorical_cross_entropy")
    parser.add_argument("--preprocess", choices=PREPROCESS_MODES,
                        default="rescale")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--patience", type=int, default=5,
                        help="early-stopping patience; 0 disables")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--val-fraction", type=float, default=0.1,
                        help="validation share when the data has no val/ dir")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gknet",
        description="Train and evaluate small image classifiers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic pattern corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--val-per-class", type=int, default=None,
                   help="val images per class (default: 30%% of --per-class)")
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train one model on a class-tree corpus")
    p.add_argument("--data", required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--model", help="path to a model spec file")
    source.add_argument("--preset", choices=PRESET_NAMES)
    p.add_argument("--resolution", type=int, default=None,
                   help="input resolution (presets default to 64)")
    p.add_argument("--channels", type=int, choices=(1, 3), default=1,
                   help="input channels for presets (default 1)")
    _add_optimizer_args(p)
    _add_run_args(p)
    p.add_argument("--out-checkpoint", help="where to save the trained model")
    p.add_argument("--out-history", help="where to save the history CSV")
    p.add_argument("--checkpoint-dir",
                   help="directory for per-epoch checkpoints")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val"), default="val")
    p.add_argument("--loss", choices=LOSS_NAMES,
                   default="categorical_cross_entropy")
    p.add_argument("--preprocess", choices=PREPROCESS_MODES, default="rescale")
    p.add_argument("--resolution", type=int, default=None,
                   help="must match the checkpoint's input resolution")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--top-k", type=int, default=None,
                   help="also report top-k accuracy")
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--image", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--preprocess", choices=PREPROCESS_MODES, default="rescale")

    p = sub.add_parser("sweep", help="train the preset x optimizer grid")
    p.add_argument("--data", required=True)
    p.add_argument("--presets", default=",".join(PRESET_NAMES),
                   help="comma-separated preset names")
    p.add_argument("--optimizers", default=",".join(OPTIMIZER_NAMES),
                   help="comma-separated optimizer names")
    p.add_argument("--seeds", default="0", help="comma-separated seeds")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--channels", type=int, choices=(1, 3), default=1)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--rho", type=float, default=0.9)
    p.add_argument("--beta1", type=float, default=0.9)
    p.add_argument("--beta2", type=float, default=0.999)
    p.add_argument("--epsilon", type=float, default=1e-7)
    _add_run_args(p)
    p.add_argument("--out", required=True, help="combined results CSV")
    p.add_argument("--out-dir",
                   help="directory for per-run checkpoints and histories")

    p = sub.add_parser("report", help="reshape history CSVs to long form")
    p.add_argument("--history", action="append", required=True,
                   help="history CSV; repeat for multiple runs")
    p.add_argument("--out", required=True)
    return parser


def _progress_printer(tag):
    def emit(record):
        print(
            f"[{tag}] epoch {record.epoch}: "
            f"train_loss={record.train_loss:.4f} "
            f"train_acc={record.train_acc:.4f} "
            f"val_loss={record.val_loss:.4f} "
            f"val_acc={record.val_acc:.4f}",
            file=sys.stderr,
        )
    return emit


def _optimizer_config(args):
    return OptimizerConfig(
        kind=args.optimizer,
        learning_rate=args.lr,
        rho=args.rho,
        beta1=args.beta1,
        beta2=args.beta2,
        epsilon=args.epsilon,
    )


def _train_config(args, optimizer):
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        optimizer=optimizer,
        loss=args.loss,
        preprocess=args.preprocess,
        patience=args.patience,
        seed=args.seed,
        resolution=getattr(args, "resolution", None),
    )


def cmd_synth(args):
    val_per_class = args.val_per_class
    if val_per_class is None:
        val_per_class = max(1, round(0.3 * args.per_class))
    written = synth_dataset(
        args.out,
        train_per_class=args.per_class,
        val_per_class=val_per_class,
        classes=args.classes,
        resolution=args.resolution,
        seed=args.seed,
    )
    print(f"wrote {written} images under {args.out}")
    return 0


def _resolve_model(args, class_count):
    if args.preset:
        resolution = args.resolution if args.resolution else 64
        return preset_config(
            args.preset, classes=class_count,
            channels=args.channels, resolution=resolution,
        )
    text = Path(args.model).read_text()
    return parse_model_spec(text, default_name=Path(args.model).stem)


def cmd_train(args):
    train_index, val_index = load_split_indexes(
        args.data, args.val_fraction, args.seed
    )
    config = _resolve_model(args, len(train_index.classes))
    network = instantiate(config, args.seed)
    run = _train_config(args, _optimizer_config(args))
    network, history = train(
        network, train_index, val_index, run,
        checkpoint_dir=args.checkpoint_dir,
        progress=_progress_printer(config.name),
    )
    if args.out_history:
        history.write_csv(args.out_history)
    if args.out_checkpoint:
        save_checkpoint(network, args.out_checkpoint)
    report, _ = evaluate(network, val_index, run)
    print(report.to_json())
    return 0


def _eval_indexes(args):
    root = Path(args.data)
    if (root / "train").is_dir() and (root / "val").is_dir():
        return scan_class_tree(root / args.split)
    train_index, val_index = load_split_indexes(
        args.data, args.val_fraction, args.seed
    )
    return train_index if args.split == "train" else val_index


def cmd_eval(args):
    network = load_checkpoint(args.checkpoint)
    index = _eval_indexes(args)
    run = TrainConfig(
        batch_size=args.batch_size,
        loss=args.loss,
        preprocess=args.preprocess,
        seed=args.seed,
        resolution=args.resolution,
    )
    report, _ = evaluate(network, index, run)
    document = report.to_dict()
    if args.top_k is not None:
        xs, ys = load_arrays(
            index, network.input_shape[1], network.input_shape[0],
            args.preprocess,
        )
        probs = network.forward(xs)
        document["top_k"] = {
            "k": args.top_k,
            "accuracy": top_k_accuracy(probs, ys, args.top_k),
        }
    print(json.dumps(document, indent=2))
    return 0


def cmd_predict(args):
    network = load_checkpoint(args.checkpoint)
    x = load_sample(
        args.image,
        network.input_shape[1],
        network.input_shape[0],
        args.preprocess,
    )
    probs = network.forward(x[None])[0]
    names = network.class_names or [str(i) for i in range(network.classes)]
    best = int(probs.argmax())
    print(json.dumps(
        {
            "class": names[best],
            "probabilities": {
                name: float(p) for name, p in zip(names, probs)
            },
        },
        indent=2,
    ))
    return 0


def cmd_sweep(args):
    presets = [s for s in args.presets.split(",") if s]
    optimizers = [s for s in args.optimizers.split(",") if s]
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s]
    except ValueError:
        raise ConfigError(f"bad --seeds value {args.seeds!r}")
    if not presets or not optimizers or not seeds:
        raise ConfigError("sweep needs at least one preset, optimizer, and seed")
    for name in optimizers:
        if name not in OPTIMIZER_NAMES:
            raise ConfigError(f"unknown optimizer {name!r}")
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)

    train_index, val_index = load_split_indexes(
        args.data, args.val_fraction, args.seed
    )
    class_count = len(train_index.classes)
    rows = []
    for preset_name in presets:
        for optimizer_name in optimizers:
            for seed in seeds:
                config = preset_config(
                    preset_name, classes=class_count,
                    channels=args.channels, resolution=args.resolution,
                )
                network = instantiate(config, seed)
                optimizer = OptimizerConfig(
                    kind=optimizer_name, learning_rate=args.lr, rho=args.rho,
                    beta1=args.beta1, beta2=args.beta2, epsilon=args.epsilon,
                )
                run = _train_config(args, optimizer)
                run.seed = seed
                tag = f"{preset_name}-{optimizer_name}-s{seed}"
                network, history = train(
                    network, train_index, val_index, run,
                    progress=_progress_printer(tag),
                )
                report, _ = evaluate(network, val_index, run)
                if out_dir:
                    save_checkpoint(network, out_dir / f"{tag}.gkpt")
                    history.write_csv(out_dir / f"{tag}.csv")
                for k, class_name in enumerate(report.class_names):
                    lo, hi = report.f1_ci[k]
                    rows.append([
                        preset_name, optimizer_name, class_name,
                        repr(report.precision[k]), repr(report.recall[k]),
                        repr(report.f1[k]), repr(lo), repr(hi),
                    ])
    with open(args.out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["model", "optimizer", "class",
             "precision", "recall", "f1", "ci_lo", "ci_hi"]
        )
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_report(args):
    with open(args.out, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["run", "epoch", "split", "metric", "value"])
        for history_path in args.history:
            run_name = Path(history_path).stem
            for row in read_history_csv(history_path):
                for split in ("train", "val"):
                    for metric in REPORT_METRICS:
                        writer.writerow(
                            [run_name, row["epoch"], split, metric,
                             row[f"{split}_{metric}"]]
                        )
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "sweep": cmd_sweep,
    "report": cmd_report,
}

_USAGE_ERRORS = (
    ConfigError, ModelSpecError, DatasetError, CheckpointError, ShapeError,
)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DecodeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def console_entry():
    sys.exit(main())


if __name__ == "__main__":
    console_entry()
