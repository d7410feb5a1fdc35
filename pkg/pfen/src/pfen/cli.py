"""Command line front end.

Commands:
    pfen train <dataset_dir>              fit a model to exported pilot sets
    pfen infer <pilots.jsonl> <out.jsonl> write mixture parameters per line

Training reads every *.jsonl file in the dataset directory (simulator
exports with noise_free and include_data on) and writes model.pt there
unless --out says otherwise.  Inference defaults to the packaged model
trained on rescale-free PSK pilot sets.  Errors exit with status 2.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

from .data import load_records
from .infer import run_inference
from .model import load_net
from .train import TrainSettings, train

PACKAGED_MODEL = "psk_norescale.pt"


def packaged_model_path() -> Path:
    return Path(resources.files("pfen") / "assets" / PACKAGED_MODEL)


def _cmd_train(args) -> int:
    records = load_records(args.dataset_dir)
    settings = TrainSettings(iterations=args.iterations, batch=args.batch,
                             lr_start=args.lr, lr_final=args.lr_final,
                             components=args.components, seed=args.seed,
                             data_chunk=args.data_chunk)
    out = args.out or str(Path(args.dataset_dir) / "model.pt")

    def report(step, loss):
        print(f"iter {step:>6d} loss {loss:+.4f}", flush=True)

    _, history = train(records, settings, checkpoint_path=out, progress=report)
    print(f"final loss {history[-1]:+.4f}")
    print(f"wrote {out}")
    return 0


def _cmd_infer(args) -> int:
    model_path = args.model or packaged_model_path()
    net = load_net(model_path)
    lines = run_inference(net, args.pilots, args.out)
    print(f"wrote {args.out} ({lines} lines)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pfen", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit a model to exported pilot sets")
    p_train.add_argument("dataset_dir")
    p_train.add_argument("--out", default=None, help="model file path")
    p_train.add_argument("--iterations", type=int, default=TrainSettings.iterations)
    p_train.add_argument("--batch", type=int, default=TrainSettings.batch)
    p_train.add_argument("--lr", type=float, default=TrainSettings.lr_start)
    p_train.add_argument("--lr-final", type=float, default=TrainSettings.lr_final)
    p_train.add_argument("--components", type=int, default=TrainSettings.components)
    p_train.add_argument("--seed", type=int, default=TrainSettings.seed)
    p_train.add_argument("--data-chunk", type=int, default=TrainSettings.data_chunk)
    p_train.set_defaults(func=_cmd_train)

    p_infer = sub.add_parser("infer", help="pilot sets in, mixture parameters out")
    p_infer.add_argument("pilots")
    p_infer.add_argument("out")
    p_infer.add_argument("--model", default=None,
                         help=f"model file (default: packaged {PACKAGED_MODEL})")
    p_infer.set_defaults(func=_cmd_infer)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
