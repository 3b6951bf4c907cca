"""AdamW with decoupled weight decay, plus global-norm gradient clipping."""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeMismatch


def adamw_step(params, grads, m, v, lr, weight_decay, beta1, beta2, eps, t):
    """One AdamW update at step ``t`` (1-based); ``m`` and ``v`` are updated in place.

    Returns the list of updated parameter arrays.
    """
    if not (len(params) == len(grads) == len(m) == len(v)):
        raise ShapeMismatch("params, grads and moment buffers differ in length")
    out = []
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, mi, vi in zip(params, grads, m, v):
        if not (p.shape == g.shape == mi.shape == vi.shape):
            raise ShapeMismatch(f"shape mismatch {p.shape} / {g.shape} / {mi.shape} / {vi.shape}")
        mi *= beta1
        mi += (1.0 - beta1) * g
        vi *= beta2
        vi += (1.0 - beta2) * g * g
        p = p * (1.0 - lr * weight_decay)
        out.append(p - lr * (mi / c1) / (np.sqrt(vi / c2) + eps))
    return out


def global_grad_norm(params):
    return math.sqrt(math.fsum(float((p.grad * p.grad).sum()) for p in params if p.grad is not None))


def clip_grad_norm(params, max_norm):
    """Scale all gradients so their joint L2 norm is at most ``max_norm``."""
    norm = global_grad_norm(params)
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class AdamW:
    def __init__(self, params, lr=1e-3, weight_decay=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new = adamw_step([p.data for p in self.params], grads, self.m, self.v, self.lr,
                         self.weight_decay, self.beta1, self.beta2, self.eps, self.t)
        for p, d in zip(self.params, new):
            p.data = d
