"""Adam and gradient accumulation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .tensor import Tensor

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdamState,
    lr: float,
    beta1: float = BETA1,
    beta2: float = BETA2,
    eps: float = EPS,
) -> dict[str, np.ndarray]:
    """Return updated copies of ``params``; ``state`` is advanced in place.

    Parameters whose gradient is ``None`` are returned unchanged and their
    moments are left alone.
    """
    state.step += 1
    t = state.step
    out = {}
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = value
            continue
        if g.shape != value.shape:
            raise ValueError(f"adam: gradient shape {g.shape} does not match parameter {name} {value.shape}")
        m = state.first.get(name)
        v = state.second.get(name)
        m = (1 - beta1) * g if m is None else beta1 * m + (1 - beta1) * g
        v = (1 - beta2) * g * g if v is None else beta2 * v + (1 - beta2) * g * g
        state.first[name] = m
        state.second[name] = v
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        out[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


class Adam:
    """Adam over a dict of named parameter tensors, updated in place."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-3):
        self.params = dict(params)
        self.lr = lr
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, grads: Optional[Mapping[str, Optional[np.ndarray]]] = None) -> None:
        if grads is None:
            grads = {n: p.grad for n, p in self.params.items() if p.requires_grad}
        values = {n: p.data for n, p in self.params.items()}
        updated = adam_step(values, grads, self.state, self.lr)
        for n, p in self.params.items():
            p.data = updated[n]


def accumulate(micro_grads: Sequence[Mapping[str, Optional[np.ndarray]]]) -> dict[str, Optional[np.ndarray]]:
    """Average per-micro-batch gradients (each from a mean-reduced loss)."""
    acc = GradientAccumulator()
    for g in micro_grads:
        acc.add(g)
    return acc.result()


class GradientAccumulator:
    """Sums micro-batch gradients and rescales by 1/k on ``result``."""

    def __init__(self):
        self._sum: dict[str, Optional[np.ndarray]] = {}
        self.count = 0

    def add(self, grads: Mapping[str, Optional[np.ndarray]], batch_size: Optional[int] = None) -> None:
        if batch_size is not None and batch_size < 1:
            raise ValueError("cannot accumulate an empty micro-batch")
        if not grads:
            raise ValueError("cannot accumulate an empty gradient set")
        for name, g in grads.items():
            prev = self._sum.get(name)
            if g is None:
                self._sum.setdefault(name, None)
            elif prev is None:
                self._sum[name] = np.array(g, dtype=np.float64)
            else:
                if prev.shape != g.shape:
                    raise ValueError(f"accumulate: shape mismatch for {name}: {prev.shape} vs {g.shape}")
                self._sum[name] = prev + g
        self.count += 1

    def result(self) -> dict[str, Optional[np.ndarray]]:
        if self.count == 0:
            raise ValueError("accumulation window is empty")
        k = float(self.count)
        return {n: (None if g is None else g / k) for n, g in self._sum.items()}
