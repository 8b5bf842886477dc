"""CLI mirroring FinetuneConfig: train a checkpoint, export probabilities."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import FinetuneConfig
from .data import read_dataset, select_split
from .export import export_probabilities
from .model import load_checkpoint
from .train import finetune


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pio-finetune", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune an encoder on a labeled dataset")
    p.add_argument("--dataset", required=True, help="labeled/clean jsonl file")
    p.add_argument("--splits", help="splits.json; restricts training to one side")
    p.add_argument("--split", choices=["base", "stack"], default="base",
                   help="which side of --splits to train on (default: base)")
    p.add_argument("--encoder", required=True,
                   help="published checkpoint name or local checkpoint path")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--learning-rate", type=float, default=2e-5)
    p.add_argument("--max-seq-len", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-freeze-first-epoch", action="store_true",
                   help="train the encoder from epoch 1")
    p.add_argument("--out", required=True, help="checkpoint output directory")

    p = sub.add_parser("export", help="write a probability interchange file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--splits", help="splits.json; restricts export to one side")
    p.add_argument("--split", choices=["base", "stack"], default="stack")
    p.add_argument("--out", required=True, help="output csv path")
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        examples = read_dataset(args.dataset)
        if args.splits:
            examples = select_split(examples, args.splits, args.split)

        if args.command == "train":
            config = FinetuneConfig(
                encoder_name=args.encoder,
                epochs=args.epochs,
                batch_size=args.batch_size,
                learning_rate=args.learning_rate,
                max_sequence_length=args.max_seq_len,
                seed=args.seed,
                freeze_first_epoch=not args.no_freeze_first_epoch,
            )
            out = finetune(examples, config, args.out)
            print(f"checkpoint written to {out}")
        else:
            model, metadata = load_checkpoint(args.checkpoint)
            n = export_probabilities(
                model, examples, args.out,
                max_sequence_length=metadata["config"]["max_sequence_length"],
            )
            print(f"wrote {n} rows to {args.out}")
        return 0
    except ValueError as exc:
        print(f"pio-finetune {args.command}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pio-finetune {args.command}: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
