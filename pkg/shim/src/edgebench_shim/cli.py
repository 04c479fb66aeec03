"""Command-line front end: simulate a run by default, drive a real model with --real."""

from __future__ import annotations

import argparse
import sys

from .adapter import run_real_adapter
from .script import FailurePoint, ShimError, ShimScript, run_shim


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shim",
        description=(
            "Phase-marked workload: emits @@BENCH markers around the idle, "
            "model-load, and generate periods, then the token count."
        ),
    )
    parser.add_argument("--idle", type=float, default=0.0, metavar="S", help="idle period length")
    parser.add_argument("--load", type=float, default=0.0, metavar="S", help="simulated load duration")
    parser.add_argument("--gen", type=float, default=0.0, metavar="S", help="simulated generation duration")
    parser.add_argument("--tokens", type=int, default=512, metavar="N", help="token count to report (or generate)")
    parser.add_argument(
        "--fail",
        choices=tuple(fp.value for fp in FailurePoint),
        help="give up at this point instead of completing",
    )
    parser.add_argument("--real", action="store_true", help="wrap an actual model instead of simulating")
    parser.add_argument("--model", metavar="ID", help="model to load with --real; ignored when simulating")
    parser.add_argument("--int4", action="store_true", help="load the model 4-bit quantized")
    parser.add_argument(
        "--quant",
        metavar="LABEL",
        help='quantization label as a sweep template passes it; "int4" behaves like --int4',
    )
    return parser


def main(argv: list[str] | None = None, backend=None) -> int:
    args = build_parser().parse_args(argv)
    int4 = args.int4 or args.quant == "int4"
    try:
        if args.real:
            if not args.model:
                raise ShimError("--real needs --model")
            return run_real_adapter(
                args.model, args.tokens, idle_s=args.idle, int4=int4, backend=backend
            )
        script = ShimScript(
            idle_s=args.idle,
            load_s=args.load,
            gen_s=args.gen,
            tokens=args.tokens,
            failure_point=FailurePoint(args.fail) if args.fail else None,
        )
        return run_shim(script)
    except ShimError as exc:
        print(f"shim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
