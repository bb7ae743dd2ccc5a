"""Loss functions and their gradients.

Inputs are (predicted, target) with equal shapes: either one sample [K] or a
batch [B, K]. Per-sample values: mse/mae/upper_bound average over outputs,
categorical cross-entropy sums over classes. The batch objective is the mean
of per-sample losses, and every gradient here is the gradient of that batch
mean, so downstream backprop is a plain chain rule with no hidden factors.
"""

import numpy as np

from .errors import ConfigError, ShapeError

LOSS_NAMES = ("mse", "mae", "upper_bound", "categorical_cross_entropy")

# Probabilities are clipped into [PROB_FLOOR, 1] before any log.
PROB_FLOOR = 1e-12


def _pair(predicted, target):
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"predicted {p.shape} and target {t.shape} shapes differ")
    if p.ndim == 1:
        p = p[None]
        t = t[None]
    if p.ndim != 2:
        raise ShapeError(f"losses take [K] or [B,K] inputs, got rank {p.ndim}")
    return p, t


def loss(name, predicted, target):
    """Batch-mean loss value as a float."""
    p, t = _pair(predicted, target)
    if name == "mse":
        return float(np.mean((t - p) ** 2))
    if name == "mae":
        return float(np.mean(np.abs(t - p)))
    if name == "upper_bound":
        return float(np.mean(np.maximum(np.maximum(1.0 - p, t), 0.0)))
    if name == "categorical_cross_entropy":
        clipped = np.clip(p, PROB_FLOOR, 1.0)
        per_sample = -(t * np.log(clipped)).sum(axis=1)
        return float(per_sample.mean())
    raise ConfigError(f"unknown loss {name!r}")


def loss_gradient(name, predicted, target):
    """Gradient of the batch-mean loss w.r.t. `predicted` (same shape)."""
    p, t = _pair(predicted, target)
    n = p.size
    if name == "mse":
        grad = 2.0 * (p - t) / n
    elif name == "mae":
        grad = np.sign(p - t) / n
    elif name == "upper_bound":
        # Subgradient: -1 where 1-p is the strict maximum of the three terms.
        active = (1.0 - p > t) & (1.0 - p > 0.0)
        grad = -active.astype(np.float64) / n
    elif name == "categorical_cross_entropy":
        clipped = np.clip(p, PROB_FLOOR, 1.0)
        grad = -(t / clipped) / p.shape[0]
    else:
        raise ConfigError(f"unknown loss {name!r}")
    if np.asarray(predicted).ndim == 1:
        return grad[0]
    return grad


def cce_logit_gradient(probabilities, target):
    """Gradient of batch-mean cross-entropy at the softmax *logits*.

    For softmax outputs with one-hot (or any distribution) targets the two
    maps fuse to (probabilities - target) / B, which is both cheaper and
    numerically cleaner than chaining through the softmax Jacobian.
    """
    p, t = _pair(probabilities, target)
    grad = (p - t) / p.shape[0]
    if np.asarray(probabilities).ndim == 1:
        return grad[0]
    return grad


def one_hot(labels, classes):
    """Integer labels [N] -> one-hot float matrix [N, classes]."""
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be rank 1, got rank {labels.ndim}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise ShapeError(f"labels must lie in [0, {classes})")
    return np.eye(classes, dtype=np.float64)[labels]
