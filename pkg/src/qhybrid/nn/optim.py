"""SGD, Adagrad and Adam updating lists of parameter arrays in place."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError


class Optimizer:
    def __init__(self, lr):
        if not lr > 0:
            raise ConfigurationError(f"learning rate must be positive, got {lr}")
        self.lr = float(lr)

    def step(self, params, grads):
        if len(params) != len(grads):
            raise ConfigurationError("params and grads differ in length")
        for i, (p, g) in enumerate(zip(params, grads)):
            self._update(i, p, np.asarray(g, dtype=np.float64))
        return params


class SGD(Optimizer):
    def _update(self, i, p, g):
        p -= self.lr * g


class Adagrad(Optimizer):
    """theta -= lr * g / (sqrt(sum of squared past gradients) + eps)."""

    def __init__(self, lr, eps=1e-10):
        super().__init__(lr)
        self.eps = eps
        self.accumulators = {}

    def _update(self, i, p, g):
        acc = self.accumulators.setdefault(i, np.zeros_like(p))
        acc += g * g
        p -= self.lr * g / (np.sqrt(acc) + self.eps)


class Adam(Optimizer):
    """Bias-corrected Adam; ``weight_decay`` adds an L2 term to the gradient first."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        super().__init__(lr)
        self.beta1, self.beta2, self.eps, self.weight_decay = beta1, beta2, eps, weight_decay
        self.m, self.v = {}, {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        return super().step(params, grads)

    def _update(self, i, p, g):
        if self.weight_decay:
            g = g + self.weight_decay * p
        m = self.m.setdefault(i, np.zeros_like(p))
        v = self.v.setdefault(i, np.zeros_like(p))
        m *= self.beta1
        m += (1 - self.beta1) * g
        v *= self.beta2
        v += (1 - self.beta2) * g * g
        m_hat = m / (1 - self.beta1 ** self.t)
        v_hat = v / (1 - self.beta2 ** self.t)
        p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "sgd"
    lr: float = 0.5
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sgd", "adagrad", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise ConfigurationError("lr must be positive")

    def build(self) -> Optimizer:
        if self.kind == "sgd":
            return SGD(self.lr)
        if self.kind == "adagrad":
            return Adagrad(self.lr)
        return Adam(self.lr, weight_decay=self.weight_decay)


def optimizer_step(opt: Optimizer, params, grads):
    return opt.step(params, grads)
