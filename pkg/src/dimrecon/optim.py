"""Adam with an exponentially decaying learning rate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def lr_schedule(epoch: int, lr0: float = 1e-4, decay: float = 0.95) -> float:
    """``lr0 * decay ** epoch``; the decay is applied once per epoch."""
    return lr0 * decay ** epoch


@dataclass
class AdamState:
    lr0: float = 1e-4
    decay: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    epoch: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_arrays(cls, arrays, **kw) -> "AdamState":
        return cls(m=[np.zeros_like(a, dtype=np.float64) for a in arrays],
                   v=[np.zeros_like(a, dtype=np.float64) for a in arrays], **kw)

    @property
    def lr(self) -> float:
        return lr_schedule(self.epoch, self.lr0, self.decay)


def adam_step(state: AdamState, params, grads) -> None:
    """Bias-corrected Adam update, in place.

    ``params`` is a :class:`~dimrecon.network.ParameterSet` or a list of
    float64 arrays; ``grads`` matches ``params.arrays()`` (or the list).
    """
    arrays = params.arrays() if hasattr(params, "arrays") else params
    if len(grads) != len(arrays) or len(state.m) != len(arrays):
        raise ValueError("gradient/moment count does not match parameters")
    state.step += 1
    t = state.step
    lr = state.lr
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(arrays, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    if hasattr(params, "touch"):
        params.touch()
