"""Command-line interface.

Exit codes: 0 success, 1 usage, 2 validation/config, 3 io or training
failure.  Errors go to stderr as a single JSON line so pipeline drivers can
parse them.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import DEFAULT_INPUT_SIZE, TOY_INPUT_SIZE, TrainConfig
from .data import write_toy_manifest
from .errors import ConfigError, DataError, TrainingError
from .export import export_predictions
from .train import load_checkpoint, save_checkpoint, train


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def cmd_make_toy_data(args) -> int:
    write_toy_manifest(args.out, n_samples=args.samples, seed=args.seed)
    print(f"wrote {args.out} ({args.samples} samples)")
    return 0


def cmd_train(args) -> int:
    input_size = args.input_size
    if input_size is None:
        input_size = TOY_INPUT_SIZE if args.toy else DEFAULT_INPUT_SIZE
    config = TrainConfig(
        backbone=args.backbone,
        model_id=args.model_id,
        input_size=input_size,
        batch_size=args.batch_size,
        epochs=args.epochs,
        lr=args.lr,
        lr_decay_rate=args.lr_decay_rate,
        lr_patience=args.lr_patience,
        freeze_backbone=not args.unfreeze_backbone,
        toy=args.toy,
        seed=args.seed,
    )
    checkpoint = train(config, args.manifest, data_root=args.data_root)
    save_checkpoint(checkpoint, args.out)
    last = checkpoint.log[-1]
    decays = sum(1 for e in checkpoint.log if e["lr_decayed"])
    print(
        f"trained {config.model_id} ({config.backbone}) for "
        f"{len(checkpoint.log)} epochs; final val accuracy "
        f"{last['val_accuracy']:.4f}, lr decays {decays}"
    )
    print(f"wrote {args.out}")
    return 0


def cmd_export(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    count = export_predictions(
        checkpoint, args.manifest, args.split, args.out, data_root=args.data_root
    )
    print(f"wrote {args.out} ({count} rows, model_id={checkpoint.model_id})")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="tltrainer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy-data", help="write a synthetic split manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_toy_data)

    p = sub.add_parser("train", help="fit one model and save its checkpoint")
    p.add_argument("--manifest", required=True)
    p.add_argument("--backbone", required=True)
    p.add_argument("--model-id", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--data-root", default=None)
    p.add_argument("--input-size", type=int, default=None,
                   help="defaults to 460, or 32 with --toy")
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lr-decay-rate", type=float, default=0.1)
    p.add_argument("--lr-patience", type=int, default=5)
    p.add_argument("--unfreeze-backbone", action="store_true")
    p.add_argument("--toy", action="store_true",
                   help="synthesize pixels instead of reading image files")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("export", help="write a prediction table for one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True, choices=("train", "val", "test"))
    p.add_argument("--out", required=True)
    p.add_argument("--data-root", default=None)
    p.set_defaults(func=cmd_export)
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"code": code, "error": kind, "message": message}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        return _fail(1, "usage", str(exc))
    except ConfigError as exc:
        return _fail(2, "config", str(exc))
    except DataError as exc:
        return _fail(2, "data", str(exc))
    except TrainingError as exc:
        return _fail(3, "training", str(exc))


if __name__ == "__main__":
    sys.exit(main())
