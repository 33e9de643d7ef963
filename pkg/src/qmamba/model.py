"""Mamba2 block and model assembly.

A block is: RMS-norm, one wide input projection split into gate z,
conv-bound features xBC and per-head step sizes dt; a causal depthwise
convolution (kernel 4) over xBC; SiLU; the xBC split into SSM inputs
X, B, C; the state-space recurrence; a gated RMS norm (normalize the SSM
output, multiply by silu(z), scale); the output projection; and a
residual connection.

Norms and SiLU run in 32-bit floating point in every path.  In the
quantized path the two projections go through the grouped-Hadamard W8A8
layers (static activation scales, so streaming decode is bit-identical to
prefill), the convolution runs on PoT fixed-point codes, and the SSM runs
the 16-bit fixed-point recurrence.  The residual and everything between
fixed-point stages is float.

Weight containers use the FMW tensor schema (see docs/formats.md):
float checkpoints carry `layers.<i>.in_proj.weight` etc.; quantized
checkpoints replace projection weights with `.wq/.s_w/.s_coe/.s_shift/.m`
records, conv weights with per-channel PoT codes, and SSM params with
16-bit fixed tensors plus a per-layer format vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .fixpoint import FixFormat, FixTensor, narrow, quantize_pot
from .hadamard import QuantLinearLayer, quantized_linear
from .ssm import QuantSsm, SsmDims, SsmParams, step1_delta, step2_discretize, recurrence_step

SSM_FRAC_KEYS = ("x", "b", "c", "dt_a", "q", "h", "y")  # order of layers.<i>.ssm.fracs


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int
    d_model: int
    expand: int = 2
    n_heads: int = 1
    head_dim: int = 64
    d_state: int = 16
    d_conv: int = 4
    vocab_size: int = 0
    rms_eps: float = 1e-5

    def __post_init__(self):
        if self.expand * self.d_model != self.n_heads * self.head_dim:
            raise ValueError("expand * d_model must equal n_heads * head_dim")
        if self.d_conv != 4:
            raise ValueError("conv kernel size is fixed at 4")
        if min(self.n_layers, self.d_model, self.expand, self.n_heads, self.head_dim, self.d_state) < 0:
            raise ValueError("dimensions must be positive")

    @property
    def d_inner(self) -> int:
        return self.expand * self.d_model

    @property
    def conv_channels(self) -> int:
        return self.d_inner + 2 * self.d_state

    @property
    def in_proj_out(self) -> int:
        # [z | xBC | dt] along the feature dimension
        return self.d_inner + self.conv_channels + self.n_heads

    def to_json(self, path: str) -> None:
        with open(path, "w") as f:
            json.dump(self.__dict__, f, indent=2, sort_keys=True)
            f.write("\n")

    @classmethod
    def from_json(cls, path: str) -> "ModelConfig":
        with open(path) as f:
            return cls(**json.load(f))


# --- floating-point primitives -------------------------------------------


def rms_norm(x: np.ndarray, weight: np.ndarray, eps: float) -> np.ndarray:
    """y_i = x_i / sqrt(mean(x^2) + eps) * w_i, computed in float32."""
    x32 = np.asarray(x, dtype=np.float32)
    w32 = np.asarray(weight, dtype=np.float32)
    if x32.shape[-1] != w32.shape[-1]:
        raise ValueError("norm weight length mismatch")
    ms = np.mean(np.square(x32), axis=-1, keepdims=True) + np.float32(eps)
    return (x32 / np.sqrt(ms) * w32).astype(np.float64)


def silu(x: np.ndarray) -> np.ndarray:
    """x * sigmoid(x) in float32."""
    x32 = np.asarray(x, dtype=np.float32)
    with np.errstate(over="ignore"):  # exp overflow to inf gives the correct limit
        return (x32 / (np.float32(1.0) + np.exp(-x32))).astype(np.float64)


def gated_rms_norm(y: np.ndarray, z: np.ndarray, weight: np.ndarray, eps: float) -> np.ndarray:
    """Normalize y, multiply by silu(z), scale by the norm weight."""
    y32 = np.asarray(y, dtype=np.float32)
    ms = np.mean(np.square(y32), axis=-1, keepdims=True) + np.float32(eps)
    normed = (y32 / np.sqrt(ms)).astype(np.float64)
    return normed * silu(z) * np.asarray(weight, dtype=np.float64)


def _mm(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # einsum keeps float accumulation order fixed regardless of BLAS threads
    return np.einsum("ld,qd->lq", x, w)


def causal_conv1d(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray, window: np.ndarray):
    """Depthwise causal convolution, kernel length 4, float path.

    x: (L, channels); window: (3, channels) of preceding inputs (zeros at
    sequence start).  Returns (y, new window).  y_t sums k_j * x_{t-3+j},
    so k[3] multiplies the newest sample.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape[-1] != 4:
        raise ValueError("conv kernel length must be 4")
    xp = np.concatenate([window, np.asarray(x, dtype=np.float64)], axis=0)
    length = x.shape[0]
    y = np.zeros((length, kernel.shape[0]), dtype=np.float64)
    for j in range(4):
        y += xp[j : j + length] * kernel[:, j]
    return y + bias, xp[-3:].copy()


@dataclass(frozen=True)
class QuantConv:
    """Per-channel PoT int8 kernel plus the activation formats."""

    wq: np.ndarray  # (channels, 4) int8 codes
    wp: np.ndarray  # (channels,) exponents; kernel value = code * 2**p
    bias: np.ndarray
    in_fmt: FixFormat
    out_fmt: FixFormat


def causal_conv1d_quant(x: np.ndarray, conv: QuantConv, window: np.ndarray, stats: dict | None = None):
    """Fixed-point causal convolution on real inputs.

    Inputs are quantized into conv.in_fmt; the window carries quantized
    codes so decode continuation reproduces prefill bit-for-bit.  Each
    output is a length-4 MAT accumulation at frac (in_frac - wp[ch]) with
    the bias added in the accumulation domain, then one narrowing.
    Returns (real outputs, new window codes).
    """
    xq = quantize_pot(x, conv.in_fmt)
    sat = xq.sat
    xp = np.concatenate([window, xq.codes], axis=0)
    length = x.shape[0]
    acc = np.zeros((length, conv.wq.shape[0]), dtype=np.int64)
    for j in range(4):
        acc += xp[j : j + length] * conv.wq[:, j]
    acc_frac = conv.in_fmt.frac - conv.wp  # per channel
    bias_codes = np.rint(conv.bias * np.exp2(acc_frac.astype(np.float64))).astype(np.int64)
    acc += bias_codes
    out = np.empty_like(acc)
    nsat = 0
    for ch in range(conv.wq.shape[0]):  # per-channel frac narrowing
        t = narrow(acc[:, ch], int(acc_frac[ch]), conv.out_fmt)
        out[:, ch] = t.codes
        nsat += t.sat
    if stats is not None:
        stats["conv_sat"] = stats.get("conv_sat", 0) + sat + nsat
    return out.astype(np.float64) * conv.out_fmt.ulp, xp[-3:].copy()


# --- block parameters and cache -------------------------------------------


@dataclass(frozen=True)
class BlockParams:
    """Float-path parameters of one block."""

    norm1_w: np.ndarray
    in_proj_w: np.ndarray
    conv_w: np.ndarray
    conv_b: np.ndarray
    ssm: SsmParams
    norm2_w: np.ndarray
    out_proj_w: np.ndarray


@dataclass(frozen=True)
class QuantBlockParams:
    """Quantized-path parameters of one block."""

    norm1_w: np.ndarray
    in_proj: QuantLinearLayer
    conv: QuantConv
    qssm: QuantSsm
    norm2_w: np.ndarray
    out_proj: QuantLinearLayer


@dataclass
class BlockCache:
    """Streaming state: last 3 conv inputs and the SSM state.

    Float path: conv_window (3, channels) float, ssm_state float array.
    Quantized path: conv_window holds codes, ssm_state is a FixTensor.
    """

    conv_window: np.ndarray
    ssm_state: object


def _zero_cache(cfg: ModelConfig, quant: bool, qssm: QuantSsm | None = None) -> BlockCache:
    window = np.zeros((3, cfg.conv_channels), dtype=np.int64 if quant else np.float64)
    if quant:
        return BlockCache(window, qssm.zero_state())
    state = np.zeros((cfg.n_heads, cfg.head_dim, cfg.d_state), dtype=np.float64)
    return BlockCache(window, state)


def _split_heads(xbc_act: np.ndarray, cfg: ModelConfig):
    """xBC activations -> (x: (L, heads, P), b: (L, heads, N), c: (L, heads, N))."""
    length = xbc_act.shape[0]
    x = xbc_act[:, : cfg.d_inner].reshape(length, cfg.n_heads, cfg.head_dim)
    b = xbc_act[:, cfg.d_inner : cfg.d_inner + cfg.d_state]
    c = xbc_act[:, cfg.d_inner + cfg.d_state :]
    b = np.repeat(b[:, None, :], cfg.n_heads, axis=1)
    c = np.repeat(c[:, None, :], cfg.n_heads, axis=1)
    return x, b, c


def block_forward(
    x: np.ndarray,
    params,
    cfg: ModelConfig,
    cache: BlockCache | None = None,
    mode: str = "prefill",
    stats: dict | None = None,
    capture: dict | None = None,
):
    """One block over (L, d_model) inputs; returns (y, cache').

    mode "decode" requires L == 1 and an existing cache; "prefill" starts
    from a zero cache when none is given.  The float path is used when
    params is BlockParams, the quantized path for QuantBlockParams.
    """
    quant = isinstance(params, QuantBlockParams)
    if mode not in ("prefill", "decode"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "decode":
        if cache is None:
            raise ValueError("decode mode requires a cache")
        if x.shape[0] != 1:
            raise ValueError("decode mode processes one position at a time")
    if cache is None:
        cache = _zero_cache(cfg, quant, params.qssm if quant else None)

    u = rms_norm(x, params.norm1_w, cfg.rms_eps)
    if capture is not None:
        capture.setdefault("in_proj_in", []).append(u)

    if quant:
        zxbcdt = quantized_linear(u, params.in_proj, stats)
    else:
        zxbcdt = _mm(u, params.in_proj_w)

    z = zxbcdt[:, : cfg.d_inner]
    xbc = zxbcdt[:, cfg.d_inner : cfg.d_inner + cfg.conv_channels]
    dt = zxbcdt[:, cfg.d_inner + cfg.conv_channels :]
    if capture is not None:
        capture.setdefault("conv_in", []).append(xbc)

    if quant:
        conv_out, window = causal_conv1d_quant(xbc, params.conv, cache.conv_window, stats)
    else:
        conv_out, window = causal_conv1d(xbc, params.conv_w, params.conv_b, cache.conv_window)
    if capture is not None:
        capture.setdefault("conv_out", []).append(conv_out)

    xbc_act = silu(conv_out)
    xs, bs, cs = _split_heads(xbc_act, cfg)
    if capture is not None:
        capture.setdefault("ssm_x", []).append(xs)
        capture.setdefault("ssm_b", []).append(bs)
        capture.setdefault("ssm_c", []).append(cs)
        capture.setdefault("ssm_dt", []).append(dt)

    length = x.shape[0]
    ys = np.empty((length, cfg.n_heads, cfg.head_dim), dtype=np.float64)
    if quant:
        state = cache.ssm_state
        for k in range(length):
            state, ys[k] = params.qssm.step(state, xs[k], bs[k], cs[k], dt[k], stats)
    else:
        state = cache.ssm_state
        ssm = params.ssm
        for k in range(length):
            dt_sp = step1_delta(dt[k], ssm.dt_bias, approx=False)
            a_bar, q = step2_discretize(dt_sp, ssm.A, bs[k], approx=False)
            state, ys[k] = recurrence_step(state, a_bar, q, xs[k], cs[k], ssm.D)

    y_flat = ys.reshape(length, cfg.d_inner)
    if capture is not None:
        capture.setdefault("out_proj_in_raw", []).append(y_flat)
    gated = gated_rms_norm(y_flat, z, params.norm2_w, cfg.rms_eps)
    if capture is not None:
        capture.setdefault("out_proj_in", []).append(gated)

    if quant:
        out = quantized_linear(gated, params.out_proj, stats)
    else:
        out = _mm(gated, params.out_proj_w)

    new_cache = BlockCache(window, state)
    return x + out, new_cache


# --- model assembly --------------------------------------------------------


@dataclass
class Model:
    """Runnable weights: per-layer params plus the optional head tensors."""

    cfg: ModelConfig
    blocks: list
    embedding: np.ndarray | None = None
    final_norm: np.ndarray | None = None
    lm_head: np.ndarray | None = None
    quantized: bool = False

    def zero_caches(self) -> list[BlockCache]:
        return [
            _zero_cache(self.cfg, self.quantized, b.qssm if self.quantized else None)
            for b in self.blocks
        ]


def model_prefill(inp: np.ndarray, model: Model, stats: dict | None = None, capture: list | None = None):
    """Run all layers over a prompt; returns (outputs, caches).

    inp is a (L,) token id array when the model has a vocabulary, else an
    (L, d_model) hidden-state matrix.  Outputs are logits (L, vocab) or
    final hidden states (L, d_model).
    """
    cfg = model.cfg
    if cfg.vocab_size > 0:
        tokens = np.asarray(inp).astype(np.int64)
        if tokens.ndim != 1:
            raise ValueError("token input must be 1-D")
        if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.vocab_size):
            raise ValueError("token id out of range")
        h = model.embedding[tokens].astype(np.float64)
    else:
        h = np.asarray(inp, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != cfg.d_model:
            raise ValueError(f"hidden input must be (L, {cfg.d_model})")
    if h.shape[0] < 1:
        raise ValueError("input length must be >= 1")

    caches = []
    for i, params in enumerate(model.blocks):
        cap = capture[i] if capture is not None else None
        h, cache = block_forward(h, params, cfg, None, "prefill", stats, cap)
        caches.append(cache)
    if model.final_norm is not None:
        h = rms_norm(h, model.final_norm, cfg.rms_eps)
    if cfg.vocab_size > 0:
        head = model.lm_head if model.lm_head is not None else model.embedding
        h = _mm(h, head.astype(np.float64))
    return h, caches


def model_decode_step(inp, model: Model, caches: list, stats: dict | None = None):
    """Single-position forward; updates caches in place, returns the output row."""
    if caches is None or len(caches) != len(model.blocks):
        raise ValueError("decode requires one cache per layer")
    cfg = model.cfg
    if cfg.vocab_size > 0:
        tok = int(inp)
        if tok < 0 or tok >= cfg.vocab_size:
            raise ValueError("token id out of range")
        h = model.embedding[[tok]].astype(np.float64)
    else:
        h = np.asarray(inp, dtype=np.float64).reshape(1, cfg.d_model)

    for i, params in enumerate(model.blocks):
        h, caches[i] = block_forward(h, params, cfg, caches[i], "decode", stats)
    if model.final_norm is not None:
        h = rms_norm(h, model.final_norm, cfg.rms_eps)
    if cfg.vocab_size > 0:
        head = model.lm_head if model.lm_head is not None else model.embedding
        h = _mm(h, head.astype(np.float64))
    return h[0]


# --- weight container <-> runnable model -----------------------------------


def is_quantized(tensors: dict) -> bool:
    return any(name.endswith(".in_proj.wq") for name in tensors)


def _get(tensors: dict, name: str) -> np.ndarray:
    if name not in tensors:
        raise KeyError(f"missing tensor {name!r}")
    return tensors[name].array


def _float_block(tensors: dict, i: int) -> BlockParams:
    p = f"layers.{i}"
    return BlockParams(
        norm1_w=_get(tensors, f"{p}.norm1.weight").astype(np.float64),
        in_proj_w=_get(tensors, f"{p}.in_proj.weight").astype(np.float64),
        conv_w=_get(tensors, f"{p}.conv.weight").astype(np.float64),
        conv_b=_get(tensors, f"{p}.conv.bias").astype(np.float64),
        ssm=SsmParams(
            A=_get(tensors, f"{p}.ssm.A"),
            D=_get(tensors, f"{p}.ssm.D"),
            dt_bias=_get(tensors, f"{p}.ssm.dt_bias"),
        ),
        norm2_w=_get(tensors, f"{p}.norm2.weight").astype(np.float64),
        out_proj_w=_get(tensors, f"{p}.out_proj.weight").astype(np.float64),
    )


def _quant_linear_from(tensors: dict, prefix: str) -> QuantLinearLayer:
    wq = _get(tensors, f"{prefix}.wq").astype(np.int64)
    m = int(_get(tensors, f"{prefix}.m"))
    return QuantLinearLayer(
        d=wq.shape[1],
        q=wq.shape[0],
        m=m if m > 0 else 1,
        wq=wq,
        s_w=float(_get(tensors, f"{prefix}.s_w")),
        hwq=(int(_get(tensors, f"{prefix}.s_coe")), int(_get(tensors, f"{prefix}.s_shift"))),
        rotate=m > 0,
    )


def _quant_block(tensors: dict, i: int, cfg: ModelConfig) -> QuantBlockParams:
    from .ssm import SsmQuantFormats  # local to keep import graph simple

    p = f"layers.{i}"
    fracs = _get(tensors, f"{p}.ssm.fracs").astype(int)
    fmts = SsmQuantFormats(**{k: FixFormat(16, int(v)) for k, v in zip(SSM_FRAC_KEYS, fracs)})
    tA, tD, tb = (tensors[f"{p}.ssm.{n}"] for n in ("A", "D", "dt_bias"))
    params = SsmParams(
        A=tA.array.astype(np.float64) * 2.0 ** (-tA.frac),
        D=tD.array.astype(np.float64) * 2.0 ** (-tD.frac),
        dt_bias=tb.array.astype(np.float64) * 2.0 ** (-tb.frac),
    )
    qssm = QuantSsm(
        dims=SsmDims(cfg.n_heads, cfg.head_dim, cfg.d_state),
        params=params,
        fmts=fmts,
        a_fix=FixTensor(tA.array.astype(np.int64), FixFormat(16, tA.frac)),
        d_fix=FixTensor(tD.array.astype(np.int64), FixFormat(16, tD.frac)),
        dt_bias_fix=FixTensor(tb.array.astype(np.int64), FixFormat(16, tb.frac)),
    )
    conv_fr = _get(tensors, f"{p}.conv.fracs").astype(int)
    conv = QuantConv(
        wq=_get(tensors, f"{p}.conv.wq").astype(np.int64),
        wp=_get(tensors, f"{p}.conv.wp").astype(np.int64),
        bias=_get(tensors, f"{p}.conv.bias").astype(np.float64),
        in_fmt=FixFormat(16, int(conv_fr[0])),
        out_fmt=FixFormat(16, int(conv_fr[1])),
    )
    return QuantBlockParams(
        norm1_w=_get(tensors, f"{p}.norm1.weight").astype(np.float64),
        in_proj=_quant_linear_from(tensors, f"{p}.in_proj"),
        conv=conv,
        qssm=qssm,
        norm2_w=_get(tensors, f"{p}.norm2.weight").astype(np.float64),
        out_proj=_quant_linear_from(tensors, f"{p}.out_proj"),
    )


def build_model(tensors: dict, cfg: ModelConfig) -> Model:
    """Assemble a runnable model from a loaded FMW tensor dict."""
    quant = is_quantized(tensors)
    blocks = [
        _quant_block(tensors, i, cfg) if quant else _float_block(tensors, i)
        for i in range(cfg.n_layers)
    ]
    emb = tensors["embedding.weight"].array if "embedding.weight" in tensors else None
    if cfg.vocab_size > 0 and emb is None:
        raise KeyError("missing tensor 'embedding.weight'")
    return Model(
        cfg=cfg,
        blocks=blocks,
        embedding=None if emb is None else emb.astype(np.float64),
        final_norm=(
            tensors["final_norm.weight"].array.astype(np.float64)
            if "final_norm.weight" in tensors
            else None
        ),
        lm_head=(
            tensors["lm_head.weight"].array.astype(np.float64)
            if "lm_head.weight" in tensors
            else None
        ),
        quantized=quant,
    )
