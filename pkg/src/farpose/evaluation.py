"""Hand-pose accuracy metrics and distance-binned reports."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import geom
from .errors import DegenerateInput, ShapeMismatch

BINS = ("Near", "Medium", "Distant")
DEFAULT_EDGES = (4.0, 8.0)


def _joints(a, name):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[1] != 3:
        raise ShapeMismatch(f"{name} must be (J, 3), got {a.shape}")
    return a


def mpjpe(pred, gt):
    """Mean per-joint position error in millimeters (inputs in meters)."""
    pred, gt = _joints(pred, "pred"), _joints(gt, "gt")
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"{pred.shape} vs {gt.shape}")
    return float(np.mean(np.linalg.norm(pred - gt, axis=1)) * 1000.0)


def procrustes_align(pred, gt):
    """``pred`` mapped onto ``gt`` by the least-squares similarity transform."""
    try:
        sim = geom.umeyama(pred, gt)
    except DegenerateInput:
        # collinear predictions: translation-only alignment
        return pred - pred.mean(0) + gt.mean(0)
    return sim.apply(pred)


def pa_mpjpe(pred, gt):
    """MPJPE after similarity (scale, rotation, translation) alignment."""
    pred, gt = _joints(pred, "pred"), _joints(gt, "gt")
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"{pred.shape} vs {gt.shape}")
    return mpjpe(procrustes_align(pred, gt), gt)


def _theta(theta, name):
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-2:] != (15, 3):
        theta = theta.reshape(theta.shape[:-1] + (15, 3)) if theta.shape[-1] == 45 else theta
    if theta.shape[-2:] != (15, 3):
        raise ShapeMismatch(f"{name} must hold 15 axis-angle rotations")
    return theta


def joint_angle_error(pred_theta, gt_theta):
    """Mean geodesic angle (degrees) between corresponding joint rotations."""
    p, g = _theta(pred_theta, "pred"), _theta(gt_theta, "gt")
    if p.shape != g.shape:
        raise ShapeMismatch(f"{p.shape} vs {g.shape}")
    return float(np.mean(geom.geodesic_deg(geom.axis_angle_to_matrix(p),
                                           geom.axis_angle_to_matrix(g))))


def angular_velocity(theta_seq):
    """Mean per-joint rotation change between consecutive frames, degrees/frame."""
    th = _theta(theta_seq, "theta")
    if th.ndim != 3 or th.shape[0] < 2:
        raise ShapeMismatch("need a (T >= 2, 15, 3) sequence")
    R = geom.axis_angle_to_matrix(th)
    return float(np.mean(geom.geodesic_deg(R[:-1], R[1:])))


def distance_bin(distance, edges=DEFAULT_EDGES):
    """Bins are left-open and right-closed: (0, lo] Near, (lo, hi] Medium, beyond Distant."""
    lo, hi = edges
    if distance <= lo:
        return BINS[0]
    if distance <= hi:
        return BINS[1]
    return BINS[2]


def bin_by_distance(wrists, cameras, edges=DEFAULT_EDGES):
    """Bin each frame by its smallest wrist-to-camera-center distance.

    ``wrists`` is (T, 3) or (T, H, 3); the minimum runs over cameras and hands.
    """
    w = np.asarray(wrists, dtype=float)
    w = w.reshape(w.shape[0], -1, 3)
    centers = np.array([c.center for c in cameras])
    d = np.linalg.norm(w[:, :, None, :] - centers[None, None], axis=-1).min(axis=(1, 2))
    return [distance_bin(x, edges) for x in d], d


def _fsum(values):
    return math.fsum(float(v) for v in values)


def _summary(values):
    v = [float(x) for x in values]
    n = len(v)
    if n == 0:
        return {"mean": None, "std": None, "se": None, "n": 0}
    mean = _fsum(v) / n
    var = _fsum((x - mean) ** 2 for x in v) / (n - 1) if n > 1 else 0.0
    std = math.sqrt(var)
    return {"mean": mean, "std": std, "se": std / math.sqrt(n), "n": n}


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    COLUMNS = ("frame", "hand", "mpjpe_mm", "pa_mpjpe_mm", "joint_angle_deg", "distance_m", "bin")

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r[c] if not isinstance(r[c], float) else repr(r[c]) for c in self.COLUMNS])
        return buf.getvalue()

    def to_json(self):
        return json.dumps(self.summary, indent=2, sort_keys=True)


def build_report(frames, hands, pred_joints, gt_joints, pred_theta, gt_theta, distances,
                 edges=DEFAULT_EDGES):
    """Per-row metrics and fixed-order aggregates.

    All sequences are aligned row by row; ``distances`` are the wrist-to-nearest
    used camera distances in meters.
    """
    rows = []
    for f, h, pj, gj, pt, gth, d in zip(frames, hands, pred_joints, gt_joints, pred_theta,
                                        gt_theta, distances):
        rows.append({
            "frame": int(f),
            "hand": h,
            "mpjpe_mm": mpjpe(pj, gj),
            "pa_mpjpe_mm": pa_mpjpe(pj, gj),
            "joint_angle_deg": joint_angle_error(pt, gth),
            "distance_m": float(d),
            "bin": distance_bin(d, edges),
        })
    summary = {k: _summary([r[k] for r in rows])
               for k in ("mpjpe_mm", "pa_mpjpe_mm", "joint_angle_deg")}
    summary["bins"] = {
        b: {"count": sum(r["bin"] == b for r in rows),
            "pa_mpjpe_mm": _summary([r["pa_mpjpe_mm"] for r in rows if r["bin"] == b]),
            "joint_angle_deg": _summary([r["joint_angle_deg"] for r in rows if r["bin"] == b])}
        for b in BINS
    }
    summary["rows"] = len(rows)
    return MetricReport(rows, summary)
