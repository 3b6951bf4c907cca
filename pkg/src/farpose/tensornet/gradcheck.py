"""Central finite-difference gradient checks."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, no_grad


def relative_error(a, b, floor=1e-8):
    """max |a - b| / max(|a|, |b|, floor), elementwise maximum."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def numeric_grad(f, inputs, h=1e-5, probe=None):
    """Finite-difference gradients of the scalar ``sum(f(*inputs) * probe)``."""
    with no_grad():
        grads = []
        for x in inputs:
            g = np.zeros_like(x.data)
            flat = x.data.reshape(-1)
            gf = g.reshape(-1)
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + h
                fp = _scalar(f(*inputs), probe)
                flat[i] = old - h
                fm = _scalar(f(*inputs), probe)
                flat[i] = old
                gf[i] = (fp - fm) / (2 * h)
            grads.append(g)
    return grads


def _scalar(out, probe):
    d = out.data if isinstance(out, Tensor) else np.asarray(out)
    return float((d * probe).sum()) if probe is not None else float(d.sum())


def check_gradients(f, inputs, h=1e-5, seed=0, floor=1e-8):
    """Compare analytic and numeric gradients of ``f`` at ``inputs``.

    The output is contracted with a fixed random probe so every output entry
    contributes. Returns the maximum relative error over all inputs.
    """
    inputs = [x if isinstance(x, Tensor) else Tensor(x) for x in inputs]
    for x in inputs:
        x.requires_grad = True
        x.grad = None
    out = f(*inputs)
    probe = np.random.default_rng(seed).standard_normal(out.shape)
    out.backward(probe)
    analytic = [x.grad if x.grad is not None else np.zeros_like(x.data) for x in inputs]
    numeric = numeric_grad(f, inputs, h, probe)
    return max(relative_error(a, n, floor) for a, n in zip(analytic, numeric))
