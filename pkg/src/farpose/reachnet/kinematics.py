"""Differentiable rotation and hand-kinematics helpers on tensornet tensors."""

from __future__ import annotations

import numpy as np

from .. import hand
from .. import tensornet as tn

_EPS = 1e-20


def _norm(v, axis=-1):
    return tn.sqrt(tn.tsum(tn.square(v), axis=axis, keepdims=True) + _EPS)


def _cross(a, b):
    ax, ay, az = a[..., 0:1], a[..., 1:2], a[..., 2:3]
    bx, by, bz = b[..., 0:1], b[..., 1:2], b[..., 2:3]
    return tn.concat([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def gram_schmidt(v6):
    """(..., 6) tensor to the three orthonormal columns b1, b2, b3."""
    a1, a2 = v6[..., 0:3], v6[..., 3:6]
    b1 = a1 / _norm(a1)
    u = a2 - tn.tsum(b1 * a2, axis=-1, keepdims=True) * b1
    b2 = u / _norm(u)
    return b1, b2, _cross(b1, b2)


def normalize_6d(v6):
    b1, b2, _ = gram_schmidt(v6)
    return tn.concat([b1, b2], axis=-1)


def matrix_from_6d(v6):
    """(M, 6) tensor to (M, 3, 3) rotation matrices with columns b1, b2, b3."""
    b1, b2, b3 = gram_schmidt(v6)
    return tn.stack([b1, b2, b3], axis=-1)


def rodrigues(aa):
    """(M, 3) axis-angle tensor to (M, 3, 3) rotation matrices."""
    x, y, z = aa[:, 0:1], aa[:, 1:2], aa[:, 2:3]
    sq = tn.tsum(tn.square(aa), axis=-1, keepdims=True)
    th = tn.sqrt(sq + _EPS)
    a = tn.sin(th) / th
    half = tn.sin(th * 0.5) / th
    b = 2.0 * half * half
    # R = I + a K + b (v v^T - |v|^2 I)
    rows = [
        1.0 + b * (x * x - sq), a * -z + b * x * y, a * y + b * x * z,
        a * z + b * x * y, 1.0 + b * (y * y - sq), a * -x + b * y * z,
        a * -y + b * x * z, a * x + b * y * z, 1.0 + b * (z * z - sq),
    ]
    return tn.reshape(tn.concat(rows, axis=-1), (aa.shape[0], 3, 3))


def forward_kinematics(beta, theta, left):
    """Wrist-local joints (M, 21, 3) for beta (M, 10) and theta (M, 15, 3) tensors.

    ``left`` is a boolean array (M,) marking mirrored hands. Matches
    ``hand.forward_kinematics`` row by row.
    """
    M = beta.shape[0]
    g = 1.0 + 0.05 * beta[:, 0:1]  # (M, 1)
    digit = 1.0 + 0.05 * beta[:, 1:6]  # (M, 5)
    bx = 1.0 + 0.05 * beta[:, 6:7]
    by = 1.0 + 0.05 * beta[:, 7:8]
    tx = 1.0 + 0.05 * beta[:, 8:9]
    dz = 0.003 * beta[:, 9:10]
    B = hand._BASES
    ones = np.ones((1, 4))
    xs = tn.concat([bx * tx, bx * ones], axis=-1) * B[:, 0]  # (M, 5)
    ys = by * B[:, 1]
    zs = dz + B[:, 2]
    bases = tn.stack([xs, ys, zs], axis=-1) * tn.reshape(g, (M, 1, 1))  # (M, 5, 3)
    scale = tn.reshape(digit * g, (M * 5, 1))
    rots = tn.reshape(rodrigues(tn.reshape(theta, (M * 15, 3))), (M * 5, 3, 9))
    p = tn.reshape(bases, (M * 5, 3))
    G = None
    pts = [p]
    for k in range(3):
        Rk = tn.reshape(rots[:, k], (M * 5, 3, 3))
        G = Rk if G is None else tn.matmul(G, Rk)
        bone = np.tile(hand._BONES[:, k], (M, 1)) * 1.0  # (M*5, 3)
        step = tn.reshape(tn.matmul(G, tn.reshape(scale * bone, (M * 5, 3, 1))), (M * 5, 3))
        p = p + step
        pts.append(p)
    digits = tn.reshape(tn.stack(pts, axis=1), (M, 20, 3))
    joints = tn.concat([tn.tensor(np.zeros((M, 1, 3))), digits], axis=1)
    sign = np.ones((M, 1, 3))
    sign[np.asarray(left, dtype=bool), 0, 0] = -1.0
    return joints * sign
