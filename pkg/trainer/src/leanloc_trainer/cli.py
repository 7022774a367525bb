"""Command-line entry points: train a regression network on a generated
dataset, then emit predictions for the evaluator."""

import argparse
import sys

from .model import PRESETS
from .predict import SPLIT_SETS, predict
from .train import TRAIN_INTERPOLATION, TRAIN_MATCHING, TrainConfig, train


def build_parser():
    p = argparse.ArgumentParser(prog="leanloc-train", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a pose-regression network")
    t.add_argument("--manifest", required=True)
    t.add_argument("--combo", default="EF")
    t.add_argument("--preset", default="tiny", choices=PRESETS)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--lr-schedule", default="constant", choices=("constant", "cosine"))
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--mode", default=TRAIN_MATCHING,
                   choices=(TRAIN_MATCHING, TRAIN_INTERPOLATION))
    t.add_argument("--init", default=None, help="checkpoint to initialize from (transfer)")
    t.add_argument("--out", default="runs")
    t.add_argument("--resize", type=int, nargs=2, default=None, metavar=("W", "H"))

    pr = sub.add_parser("predict", help="write a prediction file for a split")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--manifest", required=True)
    pr.add_argument("--split", default="test", choices=sorted(SPLIT_SETS))
    pr.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            config = TrainConfig(
                manifest=args.manifest,
                combo=args.combo,
                preset=args.preset,
                epochs=args.epochs,
                batch_size=args.batch,
                lr=args.lr,
                lr_schedule=args.lr_schedule,
                seed=args.seed,
                mode=args.mode,
                init_checkpoint=args.init,
                out_dir=args.out,
                resize=tuple(args.resize) if args.resize else None,
            )
            result = train(config)
            last = result.curves[-1] if result.curves else {}
            print(f"checkpoint: {result.checkpoint}")
            if last:
                val = f", val {last['val_loss']:.5f}" if "val_loss" in last else ""
                print(f"final epoch {last['epoch']}: train {last['train_loss']:.5f}{val}")
        else:
            out = predict(args.checkpoint, args.manifest, args.split, args.out)
            print(f"wrote predictions to {out}")
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
