"""Adam with decoupled weight decay and a warmup + cosine learning-rate schedule."""
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

import numpy as np

from models.config import OptimSection

Params = Dict[str, np.ndarray]


def learning_rate(step: int, base_lr: float, warmup_steps: int, total_steps: int) -> float:
    """Linear warmup to ``base_lr``, then cosine decay to zero at ``total_steps``.

    ``step`` counts from 1. When the warmup is longer than the run, training
    never leaves the warmup ramp.
    """
    if warmup_steps and step <= warmup_steps:
        return base_lr * step / warmup_steps
    decay = max(total_steps - warmup_steps, 1)
    progress = min(max(step - warmup_steps, 0) / decay, 1.0)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamW:
    lr: float = 2e-4
    weight_decay: float = 1e-6
    warmup_steps: int = 5000
    total_steps: int = 2000
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step_count: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    @classmethod
    def from_config(cls, section: OptimSection) -> "AdamW":
        return cls(
            lr=section.lr,
            weight_decay=section.weight_decay,
            warmup_steps=section.warmup_steps,
            total_steps=section.steps,
            betas=tuple(section.betas),
            eps=section.eps,
        )

    def current_lr(self) -> float:
        return learning_rate(max(self.step_count, 1), self.lr, self.warmup_steps, self.total_steps)

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> Params:
        """Return updated parameters; names missing from ``grads`` only decay."""
        self.step_count += 1
        lr = self.current_lr()
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count

        updated: Params = {}
        for name, value in params.items():
            g = grads.get(name)
            g = np.zeros_like(value) if g is None else g
            m = b1 * self.m.get(name, np.zeros_like(value)) + (1.0 - b1) * g
            v = b2 * self.v.get(name, np.zeros_like(value)) + (1.0 - b2) * g * g
            self.m[name], self.v[name] = m, v
            new = value * (1.0 - lr * self.weight_decay)
            updated[name] = new - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return updated

    def state_dict(self) -> dict:
        return {"step_count": self.step_count}
