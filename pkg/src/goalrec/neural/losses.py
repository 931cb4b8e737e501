"""Training losses over the softmax output and their logit gradients.

All functions take batched rows: P is (B, n) of predicted distributions,
targets is (B,) of class indices, Q is (B, n) of reference distributions.
Scalar losses are per-example vectors (B,); reductions happen in the
training loop.
"""

from __future__ import annotations

import numpy as np

PROB_FLOOR = 1e-12


def loss_ce(p: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Cross entropy -log p[target], probability floored at 1e-12."""
    picked = p[np.arange(p.shape[0]), targets]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def loss_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """KL divergence D(P || Q) per row; zero P entries contribute nothing."""
    if np.any(q <= 0.0):
        raise ValueError("reference distribution Q must be strictly positive")
    ratio = np.ones_like(p)
    mask = p > 0.0
    ratio[mask] = p[mask] / q[mask]
    terms = np.where(mask, p * np.log(ratio), 0.0)
    return terms.sum(axis=1)


def loss_combined(p: np.ndarray, targets: np.ndarray, q: np.ndarray,
                  alpha: float) -> np.ndarray:
    """alpha * cross-entropy + (1 - alpha) * KL(P || Q)."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must be in [0, 1]")
    return alpha * loss_ce(p, targets) + (1.0 - alpha) * loss_kl(p, q)


def dlogits_ce(p: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of cross entropy with respect to the pre-softmax logits: P - y."""
    grad = p.copy()
    grad[np.arange(p.shape[0]), targets] -= 1.0
    return grad


def dlogits_kl(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Gradient of KL(P || Q) with respect to the logits.

    With kl = D(P||Q) per row, the gradient is P * (log(P/Q) - kl): pushing a
    logit up moves mass toward that class, which pays its log ratio but
    relieves the average.
    """
    kl = loss_kl(p, q)
    log_ratio = np.log(np.maximum(p, PROB_FLOOR) / q)
    return p * (log_ratio - kl[:, None])


def dlogits_combined(p: np.ndarray, targets: np.ndarray, q: np.ndarray,
                     alpha: float) -> np.ndarray:
    return alpha * dlogits_ce(p, targets) + (1.0 - alpha) * dlogits_kl(p, q)
