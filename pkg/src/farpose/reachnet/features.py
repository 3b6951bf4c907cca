"""Deterministic feature stubs and per-scene input arrays.

The image backbones are replaced by fixed random linear maps of projected
keypoints, so everything here is a pure function of the observations and a
feature seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import geom, hand
from ..synth import N_BODY

WRIST_KP = (9, 10)
HAND_INPUTS = 2 * hand.N_JOINTS + 2


def person_height_px(body_kp):
    """Vertical extent of the body keypoints, in pixels."""
    v = np.asarray(body_kp)[..., 1]
    return v.max(axis=-1) - v.min(axis=-1)


def hand_crop(body_kp, bbox, visible, wrist_px):
    """Square crop (center, side): side is half the person height in pixels.

    Visible hands are centered on their box; hidden ones on the wrist keypoint.
    """
    side = np.maximum(0.5 * person_height_px(body_kp), 1.0)
    bbox = np.asarray(bbox, dtype=float)
    box_center = 0.5 * (bbox[..., :2] + bbox[..., 2:])
    center = np.where(np.asarray(visible)[..., None], box_center, wrist_px)
    return center, side


def hand_projection(cfg):
    rng = np.random.default_rng(np.random.SeedSequence([cfg.feature_seed, 1]))
    return rng.standard_normal((HAND_INPUTS, cfg.hand_dim)) / np.sqrt(HAND_INPUTS)


def hand_inputs(body_kp, joints2d, bbox, visible):
    """Stub input vector: crop-normalized joints, visibility, log crop size.

    Hidden hands map to the zero vector.
    """
    body_kp = np.asarray(body_kp, dtype=float)
    visible = np.asarray(visible, dtype=bool)
    # hidden hands are zeroed below, so the box center serves for every row
    center, side = hand_crop(body_kp, bbox, np.ones_like(visible), body_kp[..., 0, :2])
    side = np.broadcast_to(side, visible.shape)
    rel = (np.asarray(joints2d, dtype=float) - center[..., None, :]) / side[..., None, None]
    x = np.concatenate([rel.reshape(rel.shape[:-2] + (-1,)), np.ones(visible.shape + (1,)),
                        np.log(side / 100.0)[..., None]], axis=-1)
    return np.where(visible[..., None], x, 0.0)


def hand_feature_stub(obs, c, cfg, projection=None):
    """Feature vector (hand_dim,) for hand ``c`` of one observation frame."""
    h = obs.hands[c]
    W = hand_projection(cfg) if projection is None else projection
    x = hand_inputs(obs.body, h["joints2d"], h["bbox"], h["visible"])
    return x @ W


def body_inputs(body_kp):
    """Per-joint (relative position, confidence) for the pose encoder.

    Positions are taken relative to the keypoint box center and divided by the
    person height so they are independent of image position and scale.
    """
    body_kp = np.asarray(body_kp, dtype=float)
    uv = body_kp[..., :2]
    center = 0.5 * (uv.min(axis=-2) + uv.max(axis=-2))
    scale = np.maximum(person_height_px(body_kp), 1.0)
    return (uv - center[..., None, :]) / scale[..., None, None], body_kp[..., 2]


def visual_stub(cfg):
    """Fixed map of (confidence, 1) to a per-joint stand-in visual feature."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.feature_seed, 2]))
    return rng.standard_normal((N_BODY, 2, cfg.body_dim)) / np.sqrt(2.0)


def ray_sinusoids(nu, n_freqs):
    """sin and cos of each component at frequencies 2^0 .. 2^(n-1)."""
    nu = np.asarray(nu, dtype=float)
    f = 2.0 ** np.arange(n_freqs)
    arg = nu[..., :, None] * f
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=-1).reshape(nu.shape[:-1] + (-1,))


def gauge_cancel(nu_cam, cam_R, first_R):
    """Camera-frame rays re-expressed in the first camera's frame."""
    world = np.einsum("...ji,...j->...i", cam_R, nu_cam)
    return np.einsum("...ij,...j->...i", first_R, world)


def pixel_rays(cam, uv):
    """Unit camera-frame rays and normalized image coordinates (x/z, y/z)."""
    uv = np.asarray(uv, dtype=float)
    xn = np.stack([(uv[..., 0] - cam.cx) / cam.fx, (uv[..., 1] - cam.cy) / cam.fy], -1)
    d = np.concatenate([xn, np.ones(xn.shape[:-1] + (1,))], -1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True), xn


@dataclass
class SceneArrays:
    """Everything the network and the loss need from one scene.

    Per-frame arrays are indexed (T, N, ...) with N the scene's camera count;
    per-hand arrays put the hand axis after the camera axis.
    """

    hand_feat: np.ndarray  # (T, N, 2, hand_dim)
    body_rel: np.ndarray  # (T, N, 17, 2)
    body_conf: np.ndarray  # (T, N, 17)
    rays: np.ndarray  # (T, N, 2, 3) camera frame
    xn: np.ndarray  # (T, N, 2, 2)
    cam_R: np.ndarray  # (N, 3, 3)
    cam_t: np.ndarray  # (N, 3)
    intr: np.ndarray  # (N, 5) fx, fy, cx, cy, width
    gt_R: np.ndarray  # (T, N, 2, 3, 3) hand orientation in camera frame
    gt_T: np.ndarray  # (T, N, 2, 3) wrist in camera frame
    gt_conf: np.ndarray  # (T, N, 2)
    in_view: np.ndarray  # (T, N, 2)
    gt_uv: np.ndarray  # (T, N, 2, 21, 2)
    beta: np.ndarray  # (10,)
    theta: np.ndarray  # (T, 2, 15, 3)
    O: np.ndarray  # (T, 2, 3, 3)
    wrist: np.ndarray  # (T, 2, 3)
    joints: np.ndarray  # (T, 2, 21, 3)
    cameras: list

    @property
    def n_frames(self):
        return self.hand_feat.shape[0]

    @property
    def n_cameras(self):
        return self.hand_feat.shape[1]


def prepare_scene(rec, cfg):
    """Build SceneArrays for a recording under feature config ``cfg``."""
    T, N = rec.n_frames, rec.n_cameras
    W = hand_projection(cfg)
    x = hand_inputs(rec.body_kp[:, :, None], rec.hand_joints2d, rec.hand_bbox, rec.hand_visible)
    hand_feat = x @ W
    body_rel, body_conf = body_inputs(rec.body_kp)
    rays = np.zeros((T, N, 2, 3))
    xn = np.zeros((T, N, 2, 2))
    gt_R = np.zeros((T, N, 2, 3, 3))
    gt_T = np.zeros((T, N, 2, 3))
    gt_uv = np.zeros((T, N, 2, hand.N_JOINTS, 2))
    intr = np.zeros((N, 5))
    for n, cam in enumerate(rec.cameras):
        wrist_px = rec.body_kp[:, n, list(WRIST_KP), :2]
        rays[:, n], xn[:, n] = pixel_rays(cam, wrist_px)
        gt_R[:, n] = cam.R @ rec.gt["O"]
        gt_T[:, n] = rec.gt["wrist"] @ cam.R.T + cam.t
        gt_uv[:, n] = geom.project(cam, rec.gt["joints"])[0]
        intr[n] = [cam.fx, cam.fy, cam.cx, cam.cy, cam.width]
    return SceneArrays(
        hand_feat=hand_feat, body_rel=body_rel, body_conf=body_conf, rays=rays, xn=xn,
        cam_R=np.array([c.R for c in rec.cameras]), cam_t=np.array([c.t for c in rec.cameras]),
        intr=intr, gt_R=gt_R, gt_T=gt_T,
        gt_conf=rec.body_kp[:, :, list(WRIST_KP), 2], in_view=rec.hand_in_view.copy(),
        gt_uv=gt_uv, beta=np.asarray(rec.gt["beta"], dtype=float), theta=rec.gt["theta"],
        O=rec.gt["O"], wrist=rec.gt["wrist"], joints=rec.gt["joints"], cameras=rec.cameras)


@dataclass
class Batch:
    """Inputs and targets for B sequences of Tb frames seen by N views."""

    hand_feat: np.ndarray  # (B, Tb, N, 2, hand_dim)
    body_rel: np.ndarray  # (B, Tb, N, 17, 2)
    body_conf: np.ndarray  # (B, Tb, N, 17)
    rays: np.ndarray  # (B, Tb, N, 2, 3) camera frame
    xn: np.ndarray  # (B, Tb, N, 2, 2)
    cam_R: np.ndarray  # (B, N, 3, 3)
    cam_t: np.ndarray  # (B, N, 3)
    intr: np.ndarray  # (B, N, 5)
    gt_R: np.ndarray
    gt_T: np.ndarray
    gt_conf: np.ndarray
    in_view: np.ndarray
    gt_uv: np.ndarray
    beta: np.ndarray  # (B, 10)
    theta: np.ndarray  # (B, Tb, 2, 15, 3)
    frames: np.ndarray  # (B, Tb) frame indices
    views: np.ndarray  # (B, N) camera indices

    @property
    def shape(self):
        return self.hand_feat.shape[:3]


def make_batch(scenes, items):
    """``items`` is a list of (scene index, frame indices, view indices)."""
    cols = {k: [] for k in Batch.__dataclass_fields__}
    for s, frames, views in items:
        a = scenes[s]
        fr = np.asarray(frames)
        vw = np.asarray(views)
        ix = np.ix_(fr, vw)
        for k in ("hand_feat", "body_rel", "body_conf", "rays", "xn", "gt_R", "gt_T", "gt_conf",
                  "in_view", "gt_uv"):
            cols[k].append(getattr(a, k)[ix])
        for k in ("cam_R", "cam_t", "intr"):
            cols[k].append(getattr(a, k)[vw])
        cols["beta"].append(a.beta)
        cols["theta"].append(a.theta[fr])
        cols["frames"].append(fr)
        cols["views"].append(vw)
    return Batch(**{k: np.stack(v) for k, v in cols.items()})
