"""Golden-file oracle: recompute everything from the committed float
checkpoint and require byte-identical results.

The fixtures were generated once by the first build that passed the full
oracle suite (tests/golden/generate.py) and are frozen; any numeric drift
in quantization, inference, or serialization shows up here.
"""

import json
import os

import numpy as np
import pytest

from qmamba.analysis import compare_models
from qmamba.fmw import FmwTensor, load_fmw, save_fmw
from qmamba.model import ModelConfig, build_model, model_prefill
from qmamba.quantize import quantize_checkpoint

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


@pytest.fixture(scope="module")
def golden():
    cfg = ModelConfig.from_json(os.path.join(GOLDEN, "config.json"))
    tensors = load_fmw(os.path.join(GOLDEN, "float.fmw"))
    x = load_fmw(os.path.join(GOLDEN, "input.fmw"))["input"].array
    return cfg, tensors, x


def test_quantized_checkpoint_bytes_stable(golden, tmp_path):
    cfg, tensors, x = golden
    qt = quantize_checkpoint(tensors, cfg, calib=x.astype(np.float64))
    fresh = tmp_path / "quant.fmw"
    save_fmw(qt, str(fresh))
    committed = open(os.path.join(GOLDEN, "quant.fmw"), "rb").read()
    assert fresh.read_bytes() == committed


@pytest.mark.parametrize("which", ["ref_out", "quant_out"])
def test_prefill_outputs_bit_stable(golden, tmp_path, which):
    cfg, tensors, x = golden
    weights = tensors if which == "ref_out" else load_fmw(os.path.join(GOLDEN, "quant.fmw"))
    model = build_model(weights, cfg)
    y, _ = model_prefill(x.astype(np.float64), model)
    fresh = tmp_path / "out.fmw"
    save_fmw({"output": FmwTensor(y.astype(np.float32))}, str(fresh))
    committed = open(os.path.join(GOLDEN, f"{which}.fmw"), "rb").read()
    assert fresh.read_bytes() == committed


def test_cli_prefill_reproduces_golden_output(golden, tmp_path):
    from qmamba.cli import main

    out = tmp_path / "o.fmw"
    code = main(
        ["run", "--weights", os.path.join(GOLDEN, "float.fmw"),
         "--config", os.path.join(GOLDEN, "config.json"), "--mode", "prefill",
         "--input", os.path.join(GOLDEN, "input.fmw"), "--out", str(out)]
    )
    assert code == 0
    got = load_fmw(str(out))["output"].array
    want = load_fmw(os.path.join(GOLDEN, "ref_out.fmw"))["output"].array
    assert np.array_equal(got, want)


def test_error_metrics_frozen(golden):
    cfg, tensors, x = golden
    model_f = build_model(tensors, cfg)
    model_q = build_model(load_fmw(os.path.join(GOLDEN, "quant.fmw")), cfg)
    report = compare_models(model_f, model_q, x.astype(np.float64))
    with open(os.path.join(GOLDEN, "metrics.json")) as f:
        frozen = json.load(f)
    assert json.dumps(report, sort_keys=True) == json.dumps(frozen, sort_keys=True)
