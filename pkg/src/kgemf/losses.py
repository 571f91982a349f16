"""Loss functions returning both the value and d(loss)/d(score).

Every loss supports ``reduction`` in {"mean", "sum"}; gradients are returned
with the reduction already applied so they can be fed to ``score_grad``
directly as upstream values.
"""
from __future__ import annotations

import numpy as np

from .errors import IndexOutOfRange, LabelOutOfRange, ShapeMismatch

POINTWISE_KINDS = ("bce", "mse", "softplus")
LOSS_KINDS = ("margin_ranking", "bce", "cross_entropy", "mse", "softplus", "nssa")


def _reduce(values: np.ndarray, reduction: str):
    if reduction == "mean":
        return values.mean(), 1.0 / values.size
    if reduction == "sum":
        return values.sum(), 1.0
    raise ValueError(f"unknown reduction {reduction!r}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    # log sigma(x) = min(x, 0) - log(1 + exp(-|x|))
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def pairwise_loss(pos, neg, margin: float = 1.0, reduction: str = "mean"):
    """Margin ranking: reduce_j max(0, margin + neg_j - pos_j).

    ``neg`` is aligned with ``pos`` (one negative per positive). The
    subgradient at the hinge kink is 0. Returns (value, d/dpos, d/dneg).
    """
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if pos.shape != neg.shape:
        raise ShapeMismatch(f"pos shape {pos.shape} != neg shape {neg.shape}")
    raw = margin + neg - pos
    hinge = np.maximum(raw, 0.0)
    value, scale = _reduce(hinge, reduction)
    active = (raw > 0).astype(np.float64) * scale
    return float(value), -active, active


def pointwise_loss(kind: str, scores, labels, reduction: str = "mean"):
    """BCE-with-logits, MSE, or softplus loss on (score, label) pairs.

    BCE labels lie in [0, 1]; softplus labels in {-1, +1}. Returns
    (value, d/dscore).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape:
        raise ShapeMismatch(f"scores shape {s.shape} != labels shape {y.shape}")

    if kind == "bce":
        if y.size and (y.min() < 0.0 or y.max() > 1.0):
            raise LabelOutOfRange("BCE labels must lie in [0, 1]")
        # overflow-safe: max(s,0) - s*y + log(1 + exp(-|s|))
        per = np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))
        value, scale = _reduce(per, reduction)
        return float(value), (_sigmoid(s) - y) * scale

    if kind == "mse":
        per = (s - y) ** 2
        value, scale = _reduce(per, reduction)
        return float(value), 2.0 * (s - y) * scale

    if kind == "softplus":
        if y.size and not np.all(np.isin(y, (-1.0, 1.0))):
            raise LabelOutOfRange("softplus labels must be -1 or +1")
        per = _softplus(-y * s)
        value, scale = _reduce(per, reduction)
        return float(value), -y * _sigmoid(-y * s) * scale

    raise ValueError(f"unknown pointwise loss {kind!r}")


def setwise_ce(score_row, true_index: int):
    """Cross entropy of one candidate row: -log softmax(scores)[true_index].

    Max-shift stabilized; gradient is softmax - onehot. Returns
    (value, d/dscores).
    """
    s = np.asarray(score_row, dtype=np.float64)
    if not 0 <= true_index < s.size:
        raise IndexOutOfRange(f"true_index {true_index} out of range for row of {s.size}")
    shifted = s - s.max()
    log_z = np.log(np.exp(shifted).sum())
    value = log_z - shifted[true_index]
    grad = np.exp(shifted - log_z)
    grad[true_index] -= 1.0
    return float(value), grad


def nssa_loss(pos, neg, margin: float, temperature: float, reduction: str = "mean"):
    """Self-adversarial negative-sampling loss.

    Per positive j with negatives neg[j, :]:
        L_j = -log sigma(margin + pos_j)
              - sum_i w_ji * log sigma(-neg_ji - margin)
    where w_j = softmax_i(temperature * neg_ji), treated as constant in the
    gradient (stop-gradient). Returns (value, d/dpos, d/dneg).
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if neg.ndim != 2 or neg.shape[0] != pos.shape[0]:
        raise ShapeMismatch(f"neg must be (batch, k), got {neg.shape} for batch {pos.shape}")

    logits = temperature * neg
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=1, keepdims=True)

    per = -_log_sigmoid(margin + pos) - (w * _log_sigmoid(-neg - margin)).sum(axis=1)
    value, scale = _reduce(per, reduction)
    d_pos = -_sigmoid(-(margin + pos)) * scale
    # d/dneg of -w * log sigma(-neg - margin), w frozen
    d_neg = w * _sigmoid(neg + margin) * scale
    return float(value), d_pos, d_neg
