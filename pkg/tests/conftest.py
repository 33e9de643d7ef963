import numpy as np
import pytest

from qmamba.fmw import FmwTensor
from qmamba.model import ModelConfig


def make_float_checkpoint(cfg: ModelConfig, rng: np.random.Generator) -> dict:
    """Random but well-scaled float weights following the tensor schema."""
    t = {}
    if cfg.vocab_size > 0:
        t["embedding.weight"] = FmwTensor(
            (rng.standard_normal((cfg.vocab_size, cfg.d_model)) * 0.1).astype(np.float32)
        )
    for i in range(cfg.n_layers):
        p = f"layers.{i}"
        t[f"{p}.norm1.weight"] = FmwTensor(
            (1.0 + 0.1 * rng.standard_normal(cfg.d_model)).astype(np.float32)
        )
        t[f"{p}.in_proj.weight"] = FmwTensor(
            (rng.standard_normal((cfg.in_proj_out, cfg.d_model)) * 0.2).astype(np.float32)
        )
        t[f"{p}.conv.weight"] = FmwTensor(
            (rng.standard_normal((cfg.conv_channels, 4)) * 0.3).astype(np.float32)
        )
        t[f"{p}.conv.bias"] = FmwTensor(
            (rng.standard_normal(cfg.conv_channels) * 0.05).astype(np.float32)
        )
        t[f"{p}.ssm.A"] = FmwTensor(
            (-np.exp(rng.standard_normal(cfg.n_heads) * 0.5)).astype(np.float32)
        )
        t[f"{p}.ssm.D"] = FmwTensor((rng.standard_normal(cfg.n_heads) * 0.5).astype(np.float32))
        t[f"{p}.ssm.dt_bias"] = FmwTensor(
            (rng.standard_normal(cfg.n_heads) * 0.3).astype(np.float32)
        )
        t[f"{p}.norm2.weight"] = FmwTensor(
            (1.0 + 0.1 * rng.standard_normal(cfg.d_inner)).astype(np.float32)
        )
        t[f"{p}.out_proj.weight"] = FmwTensor(
            (rng.standard_normal((cfg.d_model, cfg.d_inner)) * 0.2).astype(np.float32)
        )
    t["final_norm.weight"] = FmwTensor(np.ones(cfg.d_model, dtype=np.float32))
    return t


@pytest.fixture
def small_cfg() -> ModelConfig:
    return ModelConfig(n_layers=2, d_model=64, expand=2, n_heads=8, head_dim=16, d_state=16)
