"""Gradient-check cases shared by the unit and acceptance suites."""

import numpy as np

from farpose import tensornet as tn
from farpose.tensornet import nn


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.uniform(margin, 1.5, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def op_cases(seed=0):
    """(name, fn, inputs) for every differentiable tensornet op."""
    rng = np.random.default_rng(seed)
    r = lambda *s: rng.normal(size=s)
    pos = lambda *s: rng.uniform(0.5, 2.0, size=s)
    cases = [
        ("add", tn.add, [r(3, 4), r(4)]),
        ("sub", tn.sub, [r(2, 3, 4), r(3, 1)]),
        ("mul", tn.mul, [r(3, 4), r(3, 4)]),
        ("div", tn.div, [r(3, 4), pos(3, 4)]),
        ("neg", tn.neg, [r(5)]),
        ("power", lambda a: tn.power(a, 3.0), [r(4, 2)]),
        ("power_frac", lambda a: tn.power(a, 0.5), [pos(4)]),
        ("exp", tn.exp, [r(3, 3)]),
        ("log", tn.log, [pos(3, 3)]),
        ("sqrt", tn.sqrt, [pos(6)]),
        ("sin", tn.sin, [r(6)]),
        ("cos", tn.cos, [r(6)]),
        ("tanh", tn.tanh, [r(6)]),
        ("sigmoid", tn.sigmoid, [r(2, 5) * 3]),
        ("relu", tn.relu, [_away_from_zero(rng, (3, 4))]),
        ("absolute", tn.absolute, [_away_from_zero(rng, (3, 4))]),
        ("square", tn.square, [r(3, 4)]),
        ("clip_min", lambda a: tn.clip_min(a, 0.0), [_away_from_zero(rng, (3, 4))]),
        ("gelu", tn.gelu, [rng.uniform(-3, 3, size=(3, 5))]),
        ("matmul_2d", tn.matmul, [r(3, 4), r(4, 2)]),
        ("matmul_batched", tn.matmul, [r(2, 3, 3, 4), r(2, 3, 4, 2)]),
        ("matmul_broadcast", tn.matmul, [r(2, 3, 4), r(4, 5)]),
        ("transpose", lambda a: tn.transpose(a, (2, 0, 1)), [r(2, 3, 4)]),
        ("swap_last", tn.swap_last, [r(2, 3, 4)]),
        ("reshape", lambda a: tn.reshape(a, (6, 2)), [r(3, 4)]),
        ("getitem_slice", lambda a: a[1:, ::2], [r(3, 4)]),
        ("getitem_fancy", lambda a: a[np.array([0, 2, 0])], [r(3, 4)]),
        ("concat", lambda a, b: tn.concat([a, b], axis=1), [r(2, 3), r(2, 2)]),
        ("stack", lambda a, b: tn.stack([a, b], axis=0), [r(2, 3), r(2, 3)]),
        ("tsum", lambda a: tn.tsum(a, axis=1, keepdims=True), [r(3, 4)]),
        ("mean", lambda a: tn.mean(a, axis=0), [r(3, 4)]),
        ("softmax", tn.softmax, [r(2, 3, 5)]),
        ("layer_norm", tn.layer_norm, [r(3, 6), r(6), r(6)]),
        ("l1", tn.l1, [r(4, 3) + 2.0, r(4, 3) - 2.0]),
        ("l1_weighted", lambda a: tn.l1(a, weight=np.array([1.0, 0.0, 2.0])), [_away_from_zero(rng, (3, 2))]),
        ("l2", tn.l2, [r(4, 3), r(4, 3)]),
        ("l2_weighted", lambda a: tn.l2(a, weight=np.array([1.0, 0.5])), [r(2, 4)]),
        ("bce_with_logits", lambda x: tn.bce_with_logits(x, np.array([0.0, 0.3, 1.0, 0.9])), [r(4) * 2]),
    ]
    return cases


def layer_cases(seed=0):
    rng = np.random.default_rng(seed)
    lin = nn.Linear(4, 3, rng)
    mha = nn.MultiHeadAttention(4, 2, rng)
    dec = nn.DecoderLayer(4, 2, 8, rng)
    x = rng.normal(size=(2, 3, 4))
    mem = rng.normal(size=(2, 5, 4))
    return [
        ("linear", lambda a: lin(a), [x]),
        ("attention_self", lambda a: mha(a), [x]),
        ("attention_cross", lambda a, m: mha(a, m), [x, mem]),
        ("decoder_layer", lambda a, m: dec(a, m), [x, mem]),
    ]
