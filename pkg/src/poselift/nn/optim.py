from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


def mse_loss(pred, target):
    """Mean over rows of the squared Euclidean row error, with its gradient."""
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - target
    n = pred.shape[0]
    loss = float((diff.astype(np.float64) ** 2).sum() / n)
    return loss, (2.0 / n) * diff


@dataclass
class Adam:
    """Adam with bias correction and a stepwise exponential learning-rate decay.

    The learning rate is ``lr * decay_rate ** (epoch // decay_every)``; call
    :meth:`end_epoch` once per epoch.
    """

    params: list
    lr: float = 2.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_rate: float = 0.96
    decay_every: int = 4
    step_count: int = 0
    epoch: int = 0
    m: list = field(default=None, repr=False)
    v: list = field(default=None, repr=False)

    def __post_init__(self):
        if self.m is None:
            self.m = [np.zeros_like(p.value) for p in self.params]
            self.v = [np.zeros_like(p.value) for p in self.params]

    @property
    def current_lr(self):
        return self.lr * self.decay_rate ** (self.epoch // self.decay_every)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.step_count += 1
        t = self.step_count
        lr = self.current_lr
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.value -= update.astype(p.value.dtype)

    def end_epoch(self):
        self.epoch += 1
