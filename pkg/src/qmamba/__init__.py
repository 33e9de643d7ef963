"""Quantized Mamba2 inference pipeline with fixed-point hardware emulation.

Subpackages by responsibility:

* fixpoint  - fixed-point formats, PoT quantization, VPU primitives
* hadamard  - grouped Hadamard rotation and W8A8 linear layers
* nonlin    - shift/PWL exponential and SoftPlus approximation
* ssm       - state-space recurrence (reference, approx, fixed-point)
* model     - Mamba2 block/model assembly and streaming caches
* fmw       - the FMW tensor container
* quantize  - offline checkpoint quantization
* perf      - analytical accelerator cycle model
* analysis  - float-vs-quantized error metrics
* cli       - command-line driver (`qmamba`)
"""

from .fixpoint import (
    FixFormat,
    FixTensor,
    VpuKind,
    calibrate_format,
    choose_pot_exponent,
    dequantize,
    quantize_pot,
    vpu_eval,
)
from .fmw import FmwTensor, load_fmw, save_fmw
from .hadamard import (
    QuantLinearLayer,
    build_hadamard,
    build_quant_linear,
    find_scale,
    hadamard_transform_groups,
    hw_quantized_linear,
    plain_w8a8_linear,
    quantize_int8,
    quantized_linear,
    requant_params,
)
from .model import ModelConfig, build_model, model_decode_step, model_prefill
from .nonlin import build_pwl_table, exp_neg_approx, nl_unit_eval, softplus_approx, split_uv
from .perf import CycleReport, HwConfig, estimate_decode, estimate_linear_cycles, estimate_prefill, estimate_ssm_cycles
from .quantize import quantize_checkpoint
from .ssm import QuantSsm, SsmDims, SsmParams, recurrence_step, ssm_prefill, ssm_quant_calibrate, step1_delta, step2_discretize

__version__ = "0.1.0"
