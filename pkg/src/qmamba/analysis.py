"""Error metrics between the float and quantized model paths."""

from __future__ import annotations

import numpy as np

from .model import Model, model_prefill


def relative_l2(ref: np.ndarray, test: np.ndarray) -> float:
    denom = float(np.linalg.norm(ref))
    return float(np.linalg.norm(test - ref)) / denom if denom else 0.0


def cosine_similarity(ref: np.ndarray, test: np.ndarray) -> float:
    a, b = ref.ravel(), test.ravel()
    if np.array_equal(a, b):
        return 1.0
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 and nb == 0.0:
        return 1.0
    if na == 0.0 or nb == 0.0:
        return 0.0
    return min(1.0, max(-1.0, float(a @ b) / (na * nb)))


def max_abs_error(ref: np.ndarray, test: np.ndarray) -> float:
    return float(np.max(np.abs(test - ref))) if ref.size else 0.0


def _metrics(ref: np.ndarray, test: np.ndarray) -> dict:
    return {
        "relative_l2": relative_l2(ref, test),
        "cosine": cosine_similarity(ref, test),
        "max_abs": max_abs_error(ref, test),
    }


def compare_models(model_f: Model, model_q: Model, inp: np.ndarray) -> dict:
    """Run both models on the same input; per-layer and end-to-end metrics.

    Layer i's entry compares the block outputs of the two full pipelines
    (so later layers include accumulated drift).
    """
    n = len(model_f.blocks)
    caps_f = [dict() for _ in range(n)]
    caps_q = [dict() for _ in range(n)]
    out_f, _ = model_prefill(inp, model_f, capture=caps_f)
    out_q, _ = model_prefill(inp, model_q, capture=caps_q)

    layers = []
    for i in range(n):
        # the next layer's normed input doubles as this layer's output probe;
        # for the last layer use the pipeline output itself
        if i + 1 < n:
            ref = np.concatenate(caps_f[i + 1]["in_proj_in"])
            test = np.concatenate(caps_q[i + 1]["in_proj_in"])
        else:
            ref, test = out_f, out_q
        layers.append(_metrics(ref, test))
    return {"layers": layers, "end_to_end": _metrics(out_f, out_q)}
