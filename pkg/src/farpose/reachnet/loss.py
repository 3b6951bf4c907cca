"""Training objective: weighted sum of rotation, translation, shape, pose,
reprojection and confidence terms, averaged over the frames of a rollout."""

from __future__ import annotations

import numpy as np

from .. import geom, hand
from .. import tensornet as tn
from ..errors import ShapeMismatch
from .kinematics import forward_kinematics, matrix_from_6d, normalize_6d

COMPONENTS = ("R", "T", "beta", "theta", "J", "C")
_LEFT = np.array([True, False])
MIN_DEPTH = 0.05


def binary_entropy(p):
    p = np.clip(np.asarray(p, dtype=float), 1e-300, 1.0)
    q = np.clip(1.0 - np.asarray(p, dtype=float), 1e-300, 1.0)
    return -(p * np.log(p) + q * np.log(q))


def reprojection(out, batch, t):
    """Predicted joints projected through each view, divided by image width.

    Returns (pred Tensor (B*2*N, 21, 2), target array, mask array).
    """
    B, _, N = out.logit.shape
    M = B * 2
    joints = forward_kinematics(tn.reshape(out.beta, (M, 10)), tn.reshape(out.theta, (M, 15, 3)),
                                np.tile(_LEFT, B))
    joints = joints[np.repeat(np.arange(M), N)]  # (M*N, 21, 3)
    R = matrix_from_6d(tn.reshape(out.rot6d, (M * N, 6)))
    cam = tn.matmul(joints, tn.swap_last(R)) + tn.reshape(out.trans, (M * N, 1, 3))
    intr = np.broadcast_to(batch.intr[:, None], (B, 2, N, 5)).reshape(M * N, 1, 5)
    z = tn.clip_min(cam[..., 2:3], MIN_DEPTH)
    W = intr[..., 4:5]
    u = (cam[..., 0:1] / z * intr[..., 0:1] + intr[..., 2:3]) / W
    v = (cam[..., 1:2] / z * intr[..., 1:2] + intr[..., 3:4]) / W
    pred = tn.concat([u, v], axis=-1)
    gt = np.swapaxes(batch.gt_uv[:, t], 1, 2).reshape(M * N, hand.N_JOINTS, 2) / W
    mask = np.swapaxes(batch.in_view[:, t], 1, 2).reshape(M * N, 1) * np.ones((1, hand.N_JOINTS))
    return pred, gt, mask


def frame_loss(out, batch, t, weights):
    """Weighted loss and its components for rollout frame ``t``."""
    B, _, N = out.logit.shape
    if batch.shape[0] != B or batch.shape[2] != N:
        raise ShapeMismatch(f"prediction batch {(B, N)} vs targets {batch.shape}")
    rows = B * 2 * N
    gt6d = geom.rot6d_from_matrix(np.swapaxes(batch.gt_R[:, t], 1, 2)).reshape(rows, 6)
    gtT = np.swapaxes(batch.gt_T[:, t], 1, 2).reshape(rows, 3)
    conf = np.swapaxes(batch.gt_conf[:, t], 1, 2).reshape(rows)
    comps = {
        "R": tn.l2(normalize_6d(tn.reshape(out.rot6d, (rows, 6))), gt6d),
        "T": tn.l1(tn.reshape(out.trans, (rows, 3)), gtT),
        "beta": tn.l2(tn.reshape(out.beta, (B * 2, 10)), np.repeat(batch.beta, 2, axis=0)),
        "theta": tn.l2(tn.reshape(out.theta, (B * 2, 45)), batch.theta[:, t].reshape(B * 2, 45)),
    }
    pred, gt, mask = reprojection(out, batch, t)
    comps["J"] = tn.l2(pred, gt, weight=mask)
    comps["C"] = tn.bce_with_logits(tn.reshape(out.logit, (rows,)), conf) - binary_entropy(conf).mean()
    total = None
    for k in COMPONENTS:
        term = comps[k] * getattr(weights, k)
        total = term if total is None else total + term
    return total, comps


def rollout_loss(outs, batch, weights):
    """Mean over frames of the per-frame losses; components as floats."""
    if len(outs) != batch.shape[1]:
        raise ShapeMismatch(f"{len(outs)} outputs for {batch.shape[1]} frames")
    total = None
    sums = dict.fromkeys(COMPONENTS, 0.0)
    for t, out in enumerate(outs):
        f, comps = frame_loss(out, batch, t, weights)
        total = f if total is None else total + f
        for k in COMPONENTS:
            sums[k] += float(comps[k].data)
    n = len(outs)
    total = total * (1.0 / n)
    return total, {k: v / n for k, v in sums.items()}
