"""Central finite-difference oracle for the autodiff engine."""

from __future__ import annotations

from typing import Callable, Mapping, Optional

import numpy as np

from .tensor import Tensor, no_grad


def numeric_grad(loss_fn: Callable[[], float], param: Tensor, h: float = 1e-5,
                 indices: Optional[np.ndarray] = None) -> np.ndarray:
    """d loss / d param by central differences, evaluated in place on ``param.data``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    with no_grad():
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def check_gradients(
    build_loss: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-5,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> dict[str, float]:
    """Worst relative error per parameter between backprop and finite differences.

    ``build_loss`` must rebuild the scalar loss from the current parameter
    values each time it is called.  With ``max_entries`` only a random subset
    of each parameter's entries is probed.
    """
    for p in params.values():
        p.grad = None
    build_loss().backward()
    analytic = {n: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for n, p in params.items()}
    worst = {}
    for name, p in params.items():
        idx = None
        if max_entries is not None and p.data.size > max_entries:
            rng = rng or np.random.default_rng(0)
            idx = rng.choice(p.data.size, size=max_entries, replace=False)
        num = numeric_grad(lambda: build_loss().item(), p, h, idx)
        a = analytic[name].reshape(-1)
        n = num.reshape(-1)
        sel = slice(None) if idx is None else idx
        worst[name] = float(relative_error(a[sel], n[sel]).max()) if a.size else 0.0
    return worst
