"""Finite-difference validation of the hand-written backward pass."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .config import ModelConfig, ENCODERS, VARIANTS
from .losses import dlogits_combined, loss_combined
from .network import backward, forward, init_parameters

EPSILON = 1e-4
# Relative error denominators are floored so that noise-scale gradients
# (central differences resolve ~1e-9 absolute) cannot inflate the ratio;
# genuinely wrong gradients still land orders of magnitude above tolerance.
DENOM_FLOOR = 1e-3


def numeric_gradient(f: Callable[[], float], tensor: np.ndarray,
                     eps: float = EPSILON) -> np.ndarray:
    """Central-difference gradient of f with respect to every tensor entry."""
    grad = np.zeros_like(tensor)
    it = np.nditer(tensor, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = tensor[idx]
        tensor[idx] = orig + eps
        up = f()
        tensor[idx] = orig - eps
        down = f()
        tensor[idx] = orig
        grad[idx] = (up - down) / (2.0 * eps)
        it.iternext()
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), DENOM_FLOOR)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(config: ModelConfig, seed: int = 0,
                    alpha: float = 0.6) -> dict[str, float]:
    """Max relative error per parameter tensor on one random example.

    Uses the combined loss so both the cross-entropy and KL paths are
    exercised; dropout is off (eval-mode forward) so the loss is smooth.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    params = init_parameters(config, rng)
    window = 3
    ids = rng.integers(0, config.vocab_size, size=(1, window)).astype(np.int64)
    goals = None
    if config.needs_goal:
        goals = rng.integers(0, config.goal_count, size=1).astype(np.int64)
    target = np.asarray([int(rng.integers(config.dc_count))], dtype=np.int64)
    q = rng.random((1, config.dc_count)) + 0.1
    q /= q.sum()

    def scalar_loss() -> float:
        probs, _ = forward(params, config, ids, goals, train_mode=False)
        return float(loss_combined(probs, target, q, alpha)[0])

    probs, cache = forward(params, config, ids, goals, train_mode=False)
    grads = backward(params, config, cache, dlogits_combined(probs, target, q, alpha))
    errors = {}
    for name, tensor in params.items():
        numeric = numeric_gradient(scalar_loss, tensor)
        errors[name] = max_relative_error(grads[name], numeric)
    return errors


def tiny_config(encoder: str, variant: str, seed: int = 0) -> ModelConfig:
    """A minimal config sized for exhaustive finite differencing."""
    return ModelConfig(vocab_size=9, dc_count=3, goal_count=2, embed_dim=4,
                       hidden_dim=5, encoder=encoder, variant=variant,
                       dropout_p=0.0, conv_widths=(2, 3), conv_filters=3,
                       seed=seed)


def check_all(seed: int = 0) -> dict[str, float]:
    """Max relative error for every encoder/variant combination."""
    results = {}
    for encoder in ENCODERS:
        for variant in VARIANTS:
            errors = check_gradients(tiny_config(encoder, variant, seed), seed=seed)
            results[f"{encoder}/{variant}"] = max(errors.values())
    return results
