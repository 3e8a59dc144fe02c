"""Central finite-difference gradients for checking backward passes."""
from __future__ import annotations

from typing import Callable

import numpy as np


def numerical_gradient(f: Callable[[], float], x: np.ndarray, step: float = 1e-3,
                       indices=None) -> np.ndarray:
    """Central differences of the scalar ``f()`` with respect to ``x``.

    ``x`` is perturbed in place and restored. With ``indices`` given (an
    iterable of multi-indices), only those entries are probed; the rest of
    the result stays zero.
    """
    grad = np.zeros(x.shape, dtype=np.float64)
    it = indices if indices is not None else np.ndindex(*x.shape)
    for idx in it:
        orig = x[idx]
        x[idx] = orig + step
        fp = float(f())
        x[idx] = orig - step
        fm = float(f())
        x[idx] = orig
        grad[idx] = (fp - fm) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Largest elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def _same_masks(a: dict, b: dict) -> bool:
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def check_model_gradients(model, x: np.ndarray, y: np.ndarray, lam: float = 0.0,
                          step: float = 1e-3) -> dict:
    """Compare a network's backward pass with central differences on every
    parameter entry.

    ``model`` must expose ``forward_backward``, ``forward``, ``parameters``,
    ``last_masks`` and ``frozen_masks`` (see :class:`msrnet.model.MsrNet`);
    run it in float64.

    A probe of +-``step`` can push some pre-activation across zero, and then
    the plain difference quotient straddles a ReLU kink and no longer
    approximates the derivative at the probe point. For those entries a
    second difference is taken with every ReLU gate frozen to its pattern at
    the unperturbed point, which is the branch the analytic gradient
    differentiates. Returns, per parameter name, the plain and the
    kink-aware max relative errors and the count of kink-crossing entries.
    """
    from .nn import loss_mse_l2

    params = model.parameters()

    def loss():
        return loss_mse_l2(model.forward(x), y, params, lam)[0]

    model.forward_backward(x, y, lam)
    analytic = {p.name: p.grad.astype(np.float64).copy() for p in params}
    model.forward(x)
    base = {k: v.copy() for k, v in model.last_masks.items()}
    gates = {k: v.astype(model.dtype) for k, v in base.items()}

    report = {}
    for p in params:
        raw = np.zeros(p.value.shape)
        aware = np.zeros(p.value.shape)
        kinks = 0
        for idx in np.ndindex(*p.value.shape):
            orig = p.value[idx]
            p.value[idx] = orig + step
            fp = float(loss())
            crossed = not _same_masks(model.last_masks, base)
            p.value[idx] = orig - step
            fm = float(loss())
            crossed = crossed or not _same_masks(model.last_masks, base)
            raw[idx] = (fp - fm) / (2 * step)
            if crossed:
                kinks += 1
                model.frozen_masks = gates
                try:
                    p.value[idx] = orig + step
                    fp = float(loss())
                    p.value[idx] = orig - step
                    fm = float(loss())
                finally:
                    model.frozen_masks = None
                aware[idx] = (fp - fm) / (2 * step)
            else:
                aware[idx] = raw[idx]
            p.value[idx] = orig
        report[p.name] = {"raw": relative_error(analytic[p.name], raw),
                          "kink_aware": relative_error(analytic[p.name], aware),
                          "kink_entries": kinks, "entries": int(p.value.size)}
    return report
