"""SGD with classical momentum and a step-decay learning-rate policy."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class StepDecaySGD:
    """In-place optimizer over a dict of named parameter arrays.

    ``lr`` is multiplied by ``decay`` every ``decay_interval`` steps.  An
    optional global ``max_norm`` rescales the gradient before the update.
    """

    lr: float
    momentum: float = 0.9
    decay: float = 0.1
    decay_interval: int = 30000
    max_norm: float | None = None
    steps: int = 0
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if not 0 < self.decay <= 1:
            raise ValueError("decay must be in (0, 1]")
        if self.decay_interval < 1:
            raise ValueError("decay_interval must be >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")

    @property
    def current_lr(self) -> float:
        return self.lr * self.decay ** (self.steps // self.decay_interval)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> float:
        """Apply one update; returns the learning rate that was used."""
        lr = self.current_lr
        scale = 1.0
        if self.max_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > self.max_norm:
                scale = self.max_norm / norm
        for name, p in params.items():
            v = self.velocity.get(name)
            if v is None:
                v = self.velocity[name] = np.zeros_like(p)
            v *= self.momentum
            v -= lr * scale * grads[name]
            p += v
        self.steps += 1
        return lr
