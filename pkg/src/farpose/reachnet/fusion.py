"""Confidence-weighted orientation fusion and conversion of network outputs."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .. import geom, hand
from ..errors import AllZeroConfidence, DegenerateInput

DEGENERATE_NORM = 1e-9


def mvu_fuse(O, c, RF):
    """World hand orientation from per-view camera-frame orientations.

    O: (N, 3, 3) per-view orientations; c: (N,) confidences; RF: (N, 3, 3)
    world-to-camera rotations. The views are moved to the world frame with
    RF^T, averaged as 6D vectors weighted by confidence, and re-orthonormalized.
    """
    O = np.asarray(O, dtype=float).reshape(-1, 3, 3)
    RF = np.asarray(RF, dtype=float).reshape(-1, 3, 3)
    c = np.asarray(c, dtype=float).reshape(-1)
    if not (len(O) == len(RF) == len(c)) or len(c) == 0:
        raise ValueError("need one confidence and one camera rotation per view")
    # correctly rounded sums make the result independent of view order
    total = math.fsum(c)
    if total < 1e-12:
        raise AllZeroConfidence("confidences sum to zero")
    world = np.swapaxes(RF, -1, -2) @ O
    weighted = c[:, None] * geom.rot6d_from_matrix(world)
    v = np.array([math.fsum(col) for col in weighted.T]) / total
    # both halves are averages of unit vectors, so 1e-9 is a relative threshold
    try:
        if min(np.linalg.norm(v[:3]), np.linalg.norm(v[3:])) < DEGENERATE_NORM:
            raise DegenerateInput("averaged 6D half vanishes")
        return geom.matrix_from_rot6d(v)
    except DegenerateInput:
        best = int(np.argmax(c))
        warnings.warn("averaged 6D halves are degenerate; using the most confident view",
                      RuntimeWarning, stacklevel=2)
        return world[best]


@dataclass
class HandPrediction:
    R: np.ndarray  # (N, 3, 3) per-view orientation, camera frame
    T: np.ndarray  # (N, 3) per-view wrist, camera frame
    c: np.ndarray  # (N,)
    beta: np.ndarray  # (10,)
    theta: np.ndarray  # (15, 3)
    O_world: np.ndarray  # (3, 3)


def step_predictions(out, cam_R):
    """Numpy HandPrediction per (sample, hand) from a StepOutput.

    Returns a list over samples of [left, right] predictions.
    """
    B, _, N = out.logit.shape
    R = geom.matrix_from_rot6d(out.rot6d.data)
    conf = 1.0 / (1.0 + np.exp(-out.logit.data))
    preds = []
    for b in range(B):
        row = []
        for c in range(2):
            row.append(HandPrediction(
                R=R[b, c], T=out.trans.data[b, c].copy(), c=conf[b, c],
                beta=out.beta.data[b, c].copy(), theta=out.theta.data[b, c].reshape(15, 3).copy(),
                O_world=mvu_fuse(R[b, c], conf[b, c], cam_R[b])))
        preds.append(row)
    return preds


def world_wrist(T, c, cam_R, cam_t, threshold=0.5):
    """Wrist position from per-view camera-frame predictions.

    Views with confidence above ``threshold`` are triangulated; with fewer
    than two such views the most confident view's own estimate is used.
    """
    T = np.asarray(T, dtype=float)
    points = np.einsum("nji,nj->ni", cam_R, T - cam_t)
    centers = -np.einsum("nji,nj->ni", cam_R, cam_t)
    good = np.flatnonzero(np.asarray(c) > threshold)
    if len(good) >= 2:
        d = points[good] - centers[good]
        norms = np.linalg.norm(d, axis=1, keepdims=True)
        if np.all(norms > 0):
            try:
                return geom.triangulate(centers[good], d / norms)[0]
            except DegenerateInput:
                pass
    return points[int(np.argmax(c))]


def world_joints(pred, wrist, handedness):
    local = hand.forward_kinematics(hand.HandShape(pred.beta, handedness), hand.HandPose(pred.theta))
    return hand.place(local, hand.HandPlacement(pred.O_world, wrist))
