"""Offline converter: upstream Mamba2 checkpoints -> the FMW container."""

from .convert import NameMap, convert, infer_config, required_targets
from .fmwio import read_fmw, write_fmw
from .readers import load_checkpoint, load_safetensors
from .verify import verify

__version__ = "0.1.0"
