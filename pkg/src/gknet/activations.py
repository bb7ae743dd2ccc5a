"""Scalar activations and the softmax map.

Derivatives are expressed in terms of the pre-activation z, which is what
the layers cache. ReLU's derivative at exactly 0 is taken as 0.
"""

import numpy as np

from .errors import ConfigError

ACTIVATION_NAMES = ("sigmoid", "tanh", "relu", "identity")


def sigmoid(z):
    # Split on sign so exp never sees a large positive argument.
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activation_apply(name, z):
    """Apply activation `name` pointwise to z."""
    z = np.asarray(z, dtype=np.float64)
    if name == "sigmoid":
        return sigmoid(z)
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "identity":
        return z.copy()
    raise ConfigError(f"unknown activation {name!r}")


def activation_derivative(name, z):
    """Pointwise derivative of activation `name`, evaluated at z."""
    z = np.asarray(z, dtype=np.float64)
    if name == "sigmoid":
        s = sigmoid(z)
        return s * (1.0 - s)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "identity":
        return np.ones_like(z)
    raise ConfigError(f"unknown activation {name!r}")


def softmax(z):
    """Softmax along the last axis, stabilized by a per-row max shift."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)
