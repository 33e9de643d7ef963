"""Command-line entry: `mamba2fmw convert ...` and `mamba2fmw verify ...`."""

from __future__ import annotations

import argparse
import sys

from .convert import convert
from .fmwio import FmwReadError, FmwWriteError
from .readers import CheckpointError
from .verify import verify


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mamba2fmw", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    c = sub.add_parser("convert", help="upstream checkpoint -> FMW + config JSON")
    c.add_argument("checkpoint", help="safetensors/pickle file or HF-style directory")
    c.add_argument("--out-weights", required=True)
    c.add_argument("--out-config", required=True)

    v = sub.add_parser("verify", help="check an FMW/config pair")
    v.add_argument("weights")
    v.add_argument("config")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "convert":
        try:
            report = convert(args.checkpoint, args.out_weights, args.out_config)
        except (CheckpointError, FmwReadError, FmwWriteError, OSError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        print(
            f"converted {report['mapped']} of {report['upstream_tensors']} upstream tensors "
            f"({report['emitted']} emitted)"
        )
        for name in report["unmapped"]:
            print(f"unmapped: {name}")
        print(f"wrote {args.out_weights} and {args.out_config}")
        return 0

    failures = verify(args.weights, args.config)
    if failures:
        for line in failures:
            print(line, file=sys.stderr)
        return 1
    print("OK")
    return 0


if __name__ == "__main__":
    sys.exit(main())
