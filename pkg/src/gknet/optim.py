"""First-order optimizers: SGD, RMSProp, Adam.

step(params, grads) updates the parameter arrays in place; `params` must be
the same list of arrays, in the same order, on every call. Per-parameter
state slots are allocated lazily on the first step.

Update rules (per element, one fixed operation order so that runs are
reproducible bit for bit against a scalar reference):

  sgd      w -= lr * g
  rmsprop  s = rho*s + (1-rho)*g*g;  w -= lr*g / (sqrt(s) + eps)
  adam     m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g*g
           mhat = m/(1-b1^t);  vhat = v/(1-b2^t)
           w -= lr*mhat / (sqrt(vhat) + eps)

b1^t and b2^t are tracked incrementally as Python floats.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

OPTIMIZER_NAMES = ("sgd", "rmsprop", "adam")


@dataclass
class OptimizerConfig:
    """Which optimizer to build and with what hyperparameters."""

    kind: str = "adam"
    learning_rate: float = 0.001
    rho: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7

    def validate(self):
        if self.kind not in OPTIMIZER_NAMES:
            raise ConfigError(f"unknown optimizer {self.kind!r}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(
                f"learning rate must be in (0, 1], got {self.learning_rate}"
            )
        for name in ("rho", "beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ConfigError(f"{name} must be in (0, 1), got {value}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        return self


class _Optimizer:
    def __init__(self):
        self.t = 0
        self._shapes = None

    def _check(self, params, grads):
        if len(params) != len(grads):
            raise ShapeError(
                f"{len(params)} params but {len(grads)} grads"
            )
        shapes = [p.shape for p in params]
        if self._shapes is None:
            self._shapes = shapes
        elif self._shapes != shapes:
            raise ShapeError(
                f"parameter shapes changed: {self._shapes} -> {shapes}"
            )
        for p, g in zip(params, grads):
            if p.shape != g.shape:
                raise ShapeError(f"param {p.shape} vs grad {g.shape}")

    def step(self, params, grads):
        self._check(params, grads)
        self.t += 1
        self._update(params, grads)

    def _update(self, params, grads):
        raise NotImplementedError


class SGD(_Optimizer):
    def __init__(self, learning_rate=0.001):
        super().__init__()
        OptimizerConfig(kind="sgd", learning_rate=learning_rate).validate()
        self.learning_rate = learning_rate

    def _update(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


class RMSProp(_Optimizer):
    def __init__(self, learning_rate=0.001, rho=0.9, epsilon=1e-7):
        super().__init__()
        OptimizerConfig(
            kind="rmsprop", learning_rate=learning_rate, rho=rho, epsilon=epsilon
        ).validate()
        self.learning_rate = learning_rate
        self.rho = rho
        self.epsilon = epsilon
        self.square_avg = None

    def _update(self, params, grads):
        if self.square_avg is None:
            self.square_avg = [np.zeros_like(p) for p in params]
        for p, g, s in zip(params, grads, self.square_avg):
            s *= self.rho
            s += (1.0 - self.rho) * (g * g)
            p -= self.learning_rate * g / (np.sqrt(s) + self.epsilon)


class Adam(_Optimizer):
    def __init__(self, learning_rate=0.001, beta1=0.9, beta2=0.999, epsilon=1e-7):
        super().__init__()
        OptimizerConfig(
            kind="adam",
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
        ).validate()
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.moment = None
        self.square = None
        self.beta1_t = 1.0
        self.beta2_t = 1.0

    def _update(self, params, grads):
        if self.moment is None:
            self.moment = [np.zeros_like(p) for p in params]
            self.square = [np.zeros_like(p) for p in params]
        self.beta1_t *= self.beta1
        self.beta2_t *= self.beta2
        bias1 = 1.0 - self.beta1_t
        bias2 = 1.0 - self.beta2_t
        for p, g, m, v in zip(params, grads, self.moment, self.square):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            mhat = m / bias1
            vhat = v / bias2
            p -= self.learning_rate * mhat / (np.sqrt(vhat) + self.epsilon)


def build_optimizer(config):
    """OptimizerConfig -> optimizer instance."""
    config.validate()
    if config.kind == "sgd":
        return SGD(config.learning_rate)
    if config.kind == "rmsprop":
        return RMSProp(config.learning_rate, config.rho, config.epsilon)
    return Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)
