"""Central finite-difference gradients, the oracle for reverse mode."""

from __future__ import annotations

import numpy as np


def finite_difference_grad(f, params, h=1e-5):
    """Central-difference gradient of scalar ``f`` w.r.t. named parameters.

    ``params`` maps names to float ndarrays; ``f`` receives a dict of the
    same structure and must be deterministic.  Returns a dict of gradient
    arrays shape-matched to the inputs.  Perturbs one scalar at a time, so
    cost is 2 * total parameter count evaluations of ``f``.
    """
    if h <= 0:
        raise ValueError("finite_difference_grad requires h > 0")
    work = {name: np.array(value, dtype=np.float64) for name, value in params.items()}

    def evaluate():
        value = float(f(work))
        if not np.isfinite(value):
            raise FloatingPointError("finite_difference_grad: f evaluated non-finite")
        return value

    grads = {}
    for name, arr in work.items():
        grad = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = evaluate()
            flat[i] = orig - h
            f_minus = evaluate()
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * h)
        grads[name] = grad
    return grads


def relative_error(approx, exact):
    """Max-norm relative error between two gradient dicts or arrays."""
    if isinstance(approx, dict):
        num = max(np.abs(approx[k] - exact[k]).max() for k in approx) if approx else 0.0
        den = max(max(np.abs(approx[k]).max(), np.abs(exact[k]).max()) for k in approx)
    else:
        num = np.abs(approx - exact).max()
        den = max(np.abs(approx).max(), np.abs(exact).max())
    if den == 0.0:
        return 0.0
    return float(num / den)
