import numpy as np

from ..errors import ConfigurationError, ShapeError


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label):
    """Loss ``-log softmax(logits)[label]`` and its gradient ``softmax - onehot``.

    With a (N, C) batch and N labels the loss is the batch mean and the
    gradient is scaled by 1/N accordingly.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(label)
    batched = logits.ndim == 2
    if not batched:
        logits, labels = logits[None], labels.reshape(1)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"{labels.shape} labels for {n} rows of logits")
    if np.any(labels < 0) or np.any(labels >= c):
        raise ConfigurationError(f"label out of range for {c} classes")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    losses = log_norm - z[np.arange(n), labels]
    grad = softmax(logits)
    grad[np.arange(n), labels] -= 1.0
    if batched:
        return float(losses.mean()), grad / n
    return float(losses[0]), grad[0]


def mse_loss(pred, target):
    """Mean squared error over every element, with gradient ``2 (pred - target) / N``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size
