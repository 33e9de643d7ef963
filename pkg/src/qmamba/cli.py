"""Command-line driver.

Subcommands: quantize, run, error-report, dump-pwl, perf.  Exit codes:
0 success, 1 usage error, 2 data error (bad files, schema violations).
Every subcommand writes byte-identical outputs for identical inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import analysis, nonlin, perf
from .fixpoint import FixFormat, FixTensor
from .fmw import FmwError, FmwTensor, load_fmw, save_fmw
from .hadamard import realized_scale
from .model import BlockCache, Model, ModelConfig, build_model, model_decode_step, model_prefill
from .quantize import DEFAULT_GROUP_WIDTH, quantize_checkpoint


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


class DataError(Exception):
    """File or schema problem: exit code 2."""


def _load_input(path: str) -> np.ndarray:
    tensors = load_fmw(path)
    if "input" not in tensors:
        raise DataError(f"{path}: missing tensor 'input'")
    arr = tensors["input"].array
    if arr.ndim == 1:
        return arr.astype(np.int64)  # token ids
    if arr.ndim == 2:
        return arr.astype(np.float64)  # hidden states
    raise DataError("'input' tensor must be 1-D token ids or 2-D hidden states")


def _load_model(weights_path: str, config_path: str, path_flag: str | None) -> Model:
    tensors = load_fmw(weights_path)
    cfg = ModelConfig.from_json(config_path)
    try:
        model = build_model(tensors, cfg)
    except KeyError as e:
        raise DataError(f"{weights_path}: {e.args[0]}") from e
    if path_flag == "quant" and not model.quantized:
        raise DataError(f"{weights_path}: float checkpoint cannot run the quant path")
    if path_flag == "ref" and model.quantized:
        raise DataError(f"{weights_path}: quantized checkpoint cannot run the ref path")
    return model


def _save_caches(out: dict, caches: list[BlockCache], quantized: bool) -> None:
    for i, cache in enumerate(caches):
        if quantized:
            out[f"cache.{i}.conv_window"] = FmwTensor(cache.conv_window.astype(np.int16))
            st = cache.ssm_state
            out[f"cache.{i}.ssm_state"] = FmwTensor(st.codes.astype(np.int16), st.fmt.frac)
        else:
            out[f"cache.{i}.conv_window"] = FmwTensor(cache.conv_window.astype(np.float32))
            out[f"cache.{i}.ssm_state"] = FmwTensor(cache.ssm_state.astype(np.float32))


def _load_caches(path: str, model: Model) -> list[BlockCache]:
    tensors = load_fmw(path)
    caches = []
    for i, blk in enumerate(model.blocks):
        try:
            win = tensors[f"cache.{i}.conv_window"]
            st = tensors[f"cache.{i}.ssm_state"]
        except KeyError as e:
            raise DataError(f"{path}: missing cache tensor for layer {i}") from e
        if model.quantized:
            state = FixTensor(st.array.astype(np.int64), FixFormat(16, st.frac))
            caches.append(BlockCache(win.array.astype(np.int64), state))
        else:
            caches.append(
                BlockCache(win.array.astype(np.float64), st.array.astype(np.float64))
            )
    return caches


def _cmd_quantize(args) -> int:
    tensors = load_fmw(args.infile)
    cfg = ModelConfig.from_json(args.config)
    calib = _load_input(args.calib) if args.calib else None
    try:
        qt = quantize_checkpoint(tensors, cfg, calib=calib, group_width=args.group_width)
    except (KeyError, ValueError) as e:
        raise DataError(str(e.args[0] if e.args else e)) from e
    save_fmw(qt, args.out)
    for i in range(cfg.n_layers):
        for proj in ("in_proj", "out_proj"):
            s_w = float(qt[f"layers.{i}.{proj}.s_w"].array)
            s_coe = int(qt[f"layers.{i}.{proj}.s_coe"].array)
            s_shift = int(qt[f"layers.{i}.{proj}.s_shift"].array)
            m = int(qt[f"layers.{i}.{proj}.m"].array)
            print(
                f"layers.{i}.{proj}: m={m} s_w={s_w:.6g} "
                f"s_x={realized_scale(s_coe, s_shift):.6g} (coe={s_coe}, shift={s_shift})"
            )
    print(f"wrote {args.out}")
    return 0


def _cmd_run(args) -> int:
    model = _load_model(args.weights, args.config, args.path)
    inp = _load_input(args.input)
    stats: dict = {}
    out: dict = {}
    t0 = time.perf_counter()

    if args.mode == "prefill":
        y, caches = model_prefill(inp, model, stats)
        tokens = y.shape[0]
    else:
        caches = _load_caches(args.state, model) if args.state else model.zero_caches()
        if args.state is None:
            print("no prior state given: decode starts from zero-initialized caches")
        y_rows = []
        cur = int(inp[-1]) if model.cfg.vocab_size > 0 else inp[-1]
        steps = args.steps or 1
        for _ in range(steps):
            row = model_decode_step(cur, model, caches, stats)
            y_rows.append(row)
            # greedy continuation: next token from logits, or feed hidden back
            cur = int(np.argmax(row)) if model.cfg.vocab_size > 0 else row
        y = np.stack(y_rows)
        tokens = steps

    dt = time.perf_counter() - t0
    out["output"] = FmwTensor(y.astype(np.float32))
    _save_caches(out, caches, model.quantized)
    save_fmw(out, args.out)
    sat_total = sum(stats.values())
    print(f"{tokens} token(s) in {dt:.3f}s wall-clock: {tokens / dt:.2f} token/s")
    print(f"saturation counters: total={sat_total} {stats}")
    return 0


def _cmd_error_report(args) -> int:
    # each weight set runs its natural path, so identical sets compare equal
    model_f = _load_model(args.weights_f, args.config, None)
    model_q = _load_model(args.weights_q, args.config, None)
    inp = _load_input(args.input)
    report = analysis.compare_models(model_f, model_q, inp)
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for i, layer in enumerate(report["layers"]):
            print(
                f"layer {i}: rel_l2={layer['relative_l2']:.6f} "
                f"cosine={layer['cosine']:.6f} max_abs={layer['max_abs']:.6g}"
            )
        e = report["end_to_end"]
        print(
            f"end-to-end: rel_l2={e['relative_l2']:.6f} "
            f"cosine={e['cosine']:.6f} max_abs={e['max_abs']:.6g}"
        )
    return 0


def _cmd_dump_pwl(args) -> int:
    for row in nonlin.pwl_rows():
        print(f"{row[0]:.6f},{row[1]:.17g},{row[2]:.17g},{row[3]},{row[4]}")
    return 0


def _cmd_perf(args) -> int:
    cfg = ModelConfig.from_json(args.config)
    hw = perf.HwConfig.from_json(args.hw) if args.hw else perf.HwConfig()
    if args.mode == "prefill":
        report = perf.estimate_prefill(args.length, cfg, hw, overlap=args.overlap)
    else:
        report = perf.estimate_decode(cfg, hw, power_watts=args.power, overlap=args.overlap)
    if args.json:
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    else:
        print(report.format_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qmamba", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    q = sub.add_parser("quantize", help="quantize a float FMW checkpoint")
    q.add_argument("--in", dest="infile", required=True)
    q.add_argument("--config", required=True)
    q.add_argument("--calib", default=None, help="FMW with an 'input' calibration tensor")
    q.add_argument("--out", required=True)
    q.add_argument("--group-width", type=int, default=DEFAULT_GROUP_WIDTH)
    q.set_defaults(fn=_cmd_quantize)

    r = sub.add_parser("run", help="run prefill or decode")
    r.add_argument("--weights", required=True)
    r.add_argument("--config", required=True)
    r.add_argument("--mode", choices=("prefill", "decode"), required=True)
    r.add_argument("--input", required=True)
    r.add_argument("--steps", type=int, default=None)
    r.add_argument("--out", required=True)
    r.add_argument("--path", choices=("quant", "ref"), default=None)
    r.add_argument("--state", default=None, help="FMW with cache tensors from a prior run")
    r.set_defaults(fn=_cmd_run)

    e = sub.add_parser("error-report", help="compare float vs quantized outputs")
    e.add_argument("--weights-f", required=True)
    e.add_argument("--weights-q", required=True)
    e.add_argument("--config", required=True)
    e.add_argument("--input", required=True)
    e.add_argument("--json", action="store_true")
    e.set_defaults(fn=_cmd_error_report)

    d = sub.add_parser("dump-pwl", help="print the 2^v table as CSV rows")
    d.set_defaults(fn=_cmd_dump_pwl)

    f = sub.add_parser("perf", help="cycle estimate for a config")
    f.add_argument("--config", required=True)
    f.add_argument("--hw", default=None, help="HwConfig JSON (defaults: reference design)")
    f.add_argument("--mode", choices=("prefill", "decode"), default="decode")
    f.add_argument("--length", type=int, default=256)
    f.add_argument("--power", type=float, default=None)
    f.add_argument("--overlap", action="store_true")
    f.add_argument("--json", action="store_true")
    f.set_defaults(fn=_cmd_perf)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (FmwError, DataError, OSError, ValueError, KeyError, TypeError) as e:
        # bad files, bad schemas, bad configs: all data errors
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
