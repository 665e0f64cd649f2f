"""Label-smoothed cross-entropy over the four-class head.

The smoothed target is (1-eps)*onehot + eps/K; eps=0 recovers plain
cross-entropy. Gradients come out in closed form as softmax(logits) - target.
"""

from __future__ import annotations

import numpy as np

from .model import NonFiniteLogits


def smoothed_targets(gold: np.ndarray, num_classes: int, eps: float) -> np.ndarray:
    gold = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    t = np.full((gold.shape[0], num_classes), eps / num_classes)
    t[np.arange(gold.shape[0]), gold] += 1.0 - eps
    return t


def loss_ce_smoothed(logits: np.ndarray, gold, eps: float):
    """Mean smoothed cross-entropy and its gradient w.r.t. the logits.

    Accepts a single logit vector or an (N, K) batch; the gradient has the
    same shape as the input and is already divided by the batch size.
    """
    if not 0 <= eps < 1:
        raise ValueError("eps must be in [0, 1)")
    logits_arr = np.asarray(logits, dtype=np.float64)
    single = logits_arr.ndim == 1
    logits2 = np.atleast_2d(logits_arr)
    if not np.isfinite(logits2).all():
        raise NonFiniteLogits("non-finite logits passed to loss")
    n, k = logits2.shape
    targets = smoothed_targets(gold, k, eps)
    if targets.shape[0] != n:
        raise ValueError("gold labels do not match logits batch size")

    shifted = logits2 - logits2.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = float(-(targets * log_probs).sum(axis=1).mean())
    grad = (np.exp(log_probs) - targets) / n
    if single:
        grad = grad.reshape(logits_arr.shape)
    return loss, grad
