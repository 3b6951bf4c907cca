"""Deterministic synthetic room scenes with known ground truth.

A single person moves through a room watched by ceiling cameras and wears two
fisheye chest cameras. Everything downstream (annotation, training,
evaluation) is checked against the ground truth stored here.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from . import annot, geom, hand
from .errors import ConfigError
from .geom import Camera, SimilarityTransform, Trajectory
from .masks import Mask, hull_mask

SCHEMA = "farpose-scene/1"
N_BODY = 17
HAND_SEGMENT = 0.18

# body keypoint offsets (forward, left, up) in meters, COCO order; arms are
# filled in from the hand trajectory
_BODY_REST = np.array(
    [
        [0.10, 0.00, 1.60],
        [0.08, 0.03, 1.64], [0.08, -0.03, 1.64],
        [0.00, 0.07, 1.62], [0.00, -0.07, 1.62],
        [0.00, 0.19, 1.42], [0.00, -0.19, 1.42],
        [0.00, 0.00, 0.00], [0.00, 0.00, 0.00],
        [0.00, 0.00, 0.00], [0.00, 0.00, 0.00],
        [0.00, 0.10, 0.95], [0.00, -0.10, 0.95],
        [0.02, 0.10, 0.50], [0.02, -0.10, 0.50],
        [0.00, 0.10, 0.08], [0.00, -0.10, 0.08],
    ]
)
_SHOULDER = (5, 6)
_ELBOW = (7, 8)
_WRIST = (9, 10)
# wrist rest offsets per hand (left, right), body frame
_WRIST_REST = np.array([[0.35, 0.17, 1.15], [0.35, -0.17, 1.15]])
_CHEST_OFFSET = np.array([[0.12, 0.09, 1.35], [0.12, -0.09, 1.35]])
_CHEST_PITCH = 0.0


@dataclass
class SceneConfig:
    room: tuple = (8.0, 8.0, 2.6)
    n_cameras: int = 4
    camera_seed: int = 0
    n_frames: int = 240
    fps: float = 15.0
    n_markers: int = 24
    image_width: int = 1080
    image_height: int = 810
    hand_px_at_4m: float = 40.0
    chest_size: int = 1024
    chest_fov_deg: float = 175.0
    keypoint_sigma_px: float = 2.0
    occluded_sigma_px: float = 8.0
    marker_sigma_px: float = 0.5
    occlusion_prob: float = 0.3
    occlusion_mean_frames: float = 8.0
    marker_dropout: float = 0.05
    bbox_jitter_px: float = 2.0
    est_theta_sigma: float = 0.05
    est_beta_sigma: float = 0.1
    est_rot_sigma: float = 0.02
    slam_sigma_t: float = 0.01
    slam_sigma_R: float = 0.002
    v_max: float = 1.5
    division_ratio: float = 0.0
    seed: int = 0

    def validate(self):
        if self.n_cameras < 2:
            raise ConfigError("need at least two fixed cameras")
        if self.n_frames < 2:
            raise ConfigError("need at least two frames")
        if self.fps <= 0 or self.v_max <= 0:
            raise ConfigError("fps and v_max must be positive")
        if len(self.room) != 3 or min(self.room) <= 0:
            raise ConfigError("room must be three positive dimensions")
        if self.room[0] < 4 or self.room[1] < 4 or self.room[2] < 2.2:
            raise ConfigError("room too small for the walking model")
        sigmas = ("keypoint_sigma_px", "occluded_sigma_px", "marker_sigma_px", "bbox_jitter_px",
                  "est_theta_sigma", "est_beta_sigma", "est_rot_sigma", "slam_sigma_t",
                  "slam_sigma_R")
        for name in sigmas:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if not 0 <= self.occlusion_prob <= 1 or not 0 <= self.marker_dropout <= 1:
            raise ConfigError("probabilities must lie in [0, 1]")
        if self.occlusion_mean_frames < 1:
            raise ConfigError("occlusion_mean_frames must be at least 1")
        if not 0 <= self.division_ratio <= 1:
            raise ConfigError("division_ratio must lie in [0, 1]")
        if self.n_markers < 4:
            raise ConfigError("need at least four ceiling markers")
        return self

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown scene config keys: {sorted(unknown)}")
        kw = dict(d)
        if "room" in kw:
            kw["room"] = tuple(kw["room"])
        try:
            return cls(**kw).validate()
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["room"] = list(self.room)
        return d

    def noiseless(self):
        """Same scene with every noise source and occlusion switched off."""
        return dataclasses.replace(
            self, keypoint_sigma_px=0.0, occluded_sigma_px=0.0, marker_sigma_px=0.0,
            occlusion_prob=0.0, marker_dropout=0.0, bbox_jitter_px=0.0, est_theta_sigma=0.0,
            est_beta_sigma=0.0, est_rot_sigma=0.0, slam_sigma_t=0.0, slam_sigma_R=0.0)


@dataclass
class ObservationFrame:
    camera: int
    frame: int
    body: np.ndarray  # (17, 3): u, v, confidence
    hands: list  # per hand: dict(wrist_px, bbox, visible, joints2d, mask)


@dataclass
class SceneRecording:
    config: SceneConfig
    cameras: list
    chest_intrinsics: list
    markers: np.ndarray
    gt: dict
    body_kp: np.ndarray
    body_kp_clean: np.ndarray
    hand_visible: np.ndarray
    hand_in_view: np.ndarray
    hand_joints2d: np.ndarray
    hand_bbox: np.ndarray
    masks: dict
    marker_px: np.ndarray
    marker_visible: np.ndarray
    chest_hand_visible: np.ndarray
    chest_hand_bbox: np.ndarray
    chest_hand_O: np.ndarray
    chest_hand_beta: np.ndarray
    chest_hand_theta: np.ndarray
    slam_R: np.ndarray
    slam_t: np.ndarray
    _mask_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_frames(self):
        return self.body_kp.shape[0]

    @property
    def n_cameras(self):
        return len(self.cameras)

    def mask(self, t, n, c):
        key = (int(t), int(n), int(c))
        if key not in self._mask_cache:
            d = self.masks.get(key)
            self._mask_cache[key] = None if d is None else Mask.from_dict(d)
        return self._mask_cache[key]

    def observation(self, t, n):
        hands = []
        for c in range(2):
            hands.append({
                "wrist_px": self.body_kp[t, n, _WRIST[c], :2].copy(),
                "bbox": self.hand_bbox[t, n, c].copy(),
                "visible": bool(self.hand_visible[t, n, c]),
                "joints2d": self.hand_joints2d[t, n, c].copy(),
                "mask": self.mask(t, n, c),
            })
        return ObservationFrame(n, t, self.body_kp[t, n].copy(), hands)

    def chest_trajectory(self, i):
        return Trajectory(np.arange(self.n_frames), self.gt["chest_R"][:, i],
                          self.gt["chest_t"][:, i], "world")

    # -- serialization -----------------------------------------------------

    _ARRAYS = ("markers", "body_kp", "body_kp_clean", "hand_visible", "hand_in_view",
               "hand_joints2d", "hand_bbox", "marker_px", "marker_visible",
               "chest_hand_visible", "chest_hand_bbox", "chest_hand_O", "chest_hand_beta",
               "chest_hand_theta", "slam_R", "slam_t")

    def to_json_obj(self):
        gt = {}
        for k, v in self.gt.items():
            gt[k] = v.tolist() if isinstance(v, np.ndarray) else v
        obj = {
            "schema": SCHEMA,
            "config": self.config.to_dict(),
            "cameras": [c.to_dict() for c in self.cameras],
            "chest_intrinsics": [c.to_dict() for c in self.chest_intrinsics],
            "gt": gt,
            "masks": [dict(key=list(k), **v) for k, v in sorted(self.masks.items())],
        }
        for name in self._ARRAYS:
            obj[name] = getattr(self, name).tolist()
        return obj

    def dumps(self):
        return json.dumps(self.to_json_obj(), separators=(",", ":"))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_json_obj(cls, obj):
        if obj.get("schema") != SCHEMA:
            raise ConfigError(f"unsupported scene schema {obj.get('schema')!r}")
        kw = {name: np.asarray(obj[name]) for name in cls._ARRAYS}
        for name in ("hand_visible", "hand_in_view", "marker_visible", "chest_hand_visible"):
            kw[name] = kw[name].astype(bool)
        gt = {k: (np.asarray(v, dtype=float) if isinstance(v, list) else v)
              for k, v in obj["gt"].items()}
        masks = {tuple(m["key"]): {"box": m["box"], "counts": m["counts"]} for m in obj["masks"]}
        return cls(
            config=SceneConfig.from_dict(obj["config"]),
            cameras=[Camera.from_dict(c) for c in obj["cameras"]],
            chest_intrinsics=[Camera.from_dict(c) for c in obj["chest_intrinsics"]],
            gt=gt, masks=masks, **kw)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json_obj(json.load(fh))


# ---------------------------------------------------------------------------
# rig


def focal_for_hand_width(px_at_4m):
    return px_at_4m * 4.0 / HAND_SEGMENT


def make_rig(cfg):
    """Ceiling cameras spread around the room perimeter, aimed at its middle."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.camera_seed, 17]))
    L, W, H = cfg.room
    f = focal_for_hand_width(cfg.hand_px_at_4m)
    center = np.array([L / 2, W / 2])
    cams = []
    for k in range(cfg.n_cameras):
        ang = np.pi / 4 + 2 * np.pi * k / cfg.n_cameras + rng.uniform(-0.05, 0.05)
        d = np.array([np.cos(ang), np.sin(ang)])
        reach = min((L / 2 - 0.2) / max(abs(d[0]), 1e-9), (W / 2 - 0.2) / max(abs(d[1]), 1e-9))
        xy = center + reach * d
        pos = np.array([xy[0], xy[1], H - 0.1 - 0.3 * (k % 2)])
        target = np.array([center[0], center[1], 1.0]) + np.append(rng.uniform(-0.3, 0.3, 2), 0)
        R = geom.look_at(pos, target)
        cams.append(Camera(geom.PINHOLE, f, f, cfg.image_width / 2, cfg.image_height / 2,
                           cfg.image_width, cfg.image_height, R, -R @ pos))
    return cams


def make_chest_intrinsics(cfg):
    half = cfg.chest_size / 2
    f = (half - 8) / np.radians(cfg.chest_fov_deg / 2)
    return [Camera(geom.FISHEYE, f, f, half, half, cfg.chest_size, cfg.chest_size,
                   fov_deg=cfg.chest_fov_deg) for _ in range(2)]


def make_markers(cfg):
    L, W, H = cfg.room
    nx = int(np.ceil(np.sqrt(cfg.n_markers * L / W)))
    ny = int(np.ceil(cfg.n_markers / nx))
    xs = (np.arange(nx) + 0.5) * L / nx
    ys = (np.arange(ny) + 0.5) * W / ny
    grid = np.array([[x, y, H] for y in ys for x in xs])
    return grid[: cfg.n_markers]


# ---------------------------------------------------------------------------
# motion


def _heading_frame(psi):
    """Columns: forward, left, up for heading angle(s) ``psi``."""
    c, s = np.cos(psi), np.sin(psi)
    z, o = np.zeros_like(psi), np.ones_like(psi)
    return np.stack([np.stack([c, s, z], -1), np.stack([-s, c, z], -1),
                     np.stack([z, z, o], -1)], -1)


class _Motion:
    """Sum-of-sinusoids motion model; every signal is a function of ``k * t``."""

    def __init__(self, cfg, rng):
        L, W, _ = cfg.room
        self.center = np.array([L / 2, W / 2])
        self.span = np.array([L / 2 - 1.6, W / 2 - 1.6])
        self.body_amp = rng.uniform(0.5, 1.0, (2, 2)) * np.array([[0.75], [0.25]])
        self.body_w = rng.uniform(0.08, 0.25, (2, 2))
        self.body_ph = rng.uniform(0, 2 * np.pi, (2, 2))
        self.psi0 = rng.uniform(0, 2 * np.pi)
        self.psi_amp = rng.uniform(0.5, 1.2)
        self.psi_w = rng.uniform(0.1, 0.3)
        self.psi_ph = rng.uniform(0, 2 * np.pi)
        self.hand_w = rng.uniform(0.8, 1.6, (2, 2))
        self.hand_ph = rng.uniform(0, 2 * np.pi, (2, 2))
        self.hand_amp = np.array([0.10, 0.07, 0.10]) * rng.uniform(0.7, 1.0, (2, 3))
        self.flex_base = rng.uniform(0.2, 0.6, (2, 5))
        self.flex_amp = rng.uniform(0.3, 0.6, (2, 5))
        self.rot_amp = rng.uniform(0.2, 0.4, (2, 3))
        self.k = 1.0

    def latent(self, t):
        """(T, 2 hands, 2) phase signals shared by arm, finger and wrist motion."""
        arg = self.k * t[:, None, None] * self.hand_w + self.hand_ph
        return np.sin(arg)

    def body(self, t):
        arg = self.k * t[:, None, None] * self.body_w + self.body_ph  # (T, term, axis)
        xy = self.center + self.span * np.sum(self.body_amp * np.sin(arg), axis=1)
        psi = self.psi0 + self.psi_amp * np.sin(self.k * self.psi_w * t + self.psi_ph)
        return xy, psi

    def wrists(self, t):
        xy, psi = self.body(t)
        F = _heading_frame(psi)
        s = self.latent(t)
        local = _WRIST_REST + self.hand_amp * np.stack(
            [s[..., 0], s[..., 1], 0.6 * s[..., 0] + 0.4 * s[..., 1]], -1)
        base = np.concatenate([xy, np.zeros((len(t), 1))], 1)
        return base[:, None] + np.einsum("tij,thj->thi", F, local), local, F, base

    def max_wrist_speed(self, t_end, fps):
        t = np.arange(0, t_end + 1.0 / fps, 1.0 / (8 * fps))
        w = self.wrists(t)[0]
        return np.max(np.linalg.norm(np.diff(w, axis=0), axis=-1)) * 8 * fps

    def theta(self, t):
        s = self.latent(t)
        T = len(t)
        flex = self.flex_base + self.flex_amp * (0.6 * s[..., :1] + 0.4 * s[..., 1:])
        theta = np.zeros((T, 2, 5, 3, 3))
        # fingers curl about +x toward the palm; the thumb about a tilted axis
        theta[:, :, 1:, :, 0] = flex[:, :, 1:, None] * np.array([1.0, 1.2, 0.8])
        thumb_axis = np.array([0.4, -0.3, 0.85]) / np.linalg.norm([0.4, -0.3, 0.85])
        theta[:, :, 0] = (flex[:, :, 0, None, None] * np.array([0.5, 0.8, 0.6])[:, None]
                          * thumb_axis)
        return theta.reshape(T, 2, 15, 3)

    def orientation(self, t, F):
        s = self.latent(t)
        # fingers forward, back of the hand up
        base = np.stack([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], 1)
        wob = self.rot_amp * np.stack([s[..., 1], s[..., 0], 0.5 * (s[..., 0] - s[..., 1])], -1)
        Rw = geom.axis_angle_to_matrix(wob)
        return np.einsum("tij,jk,thkl->thil", F, base, Rw)


def simulate_ground_truth(cfg, rng):
    T = cfg.n_frames
    t = np.arange(T) / cfg.fps
    motion = _Motion(cfg, rng)
    speed = motion.max_wrist_speed(t[-1], cfg.fps)
    if speed > 0.95 * cfg.v_max:
        motion.k = 0.95 * cfg.v_max / speed

    wrist_kp, _, F, base = motion.wrists(t)
    fwd, left, up = F[..., 0], F[..., 1], F[..., 2]
    body = base[:, None] + np.einsum("tij,kj->tki", F, _BODY_REST)
    shoulders = body[:, list(_SHOULDER)]
    for c in range(2):
        side = 1.0 if c == 0 else -1.0
        body[:, _WRIST[c]] = wrist_kp[:, c]
        body[:, _ELBOW[c]] = (0.5 * (shoulders[:, c] + wrist_kp[:, c]) - 0.05 * fwd
                              + side * 0.08 * left - 0.12 * up)

    beta = np.clip(rng.normal(0.0, 1.0, hand.N_BETA), -3, 3)
    theta = motion.theta(t)
    O = motion.orientation(t, F)
    a = cfg.division_ratio
    hand_wrist = (1 - a) * wrist_kp + a * body[:, list(_ELBOW)]
    joints = np.zeros((T, 2, hand.N_JOINTS, 3))
    for c, side in enumerate(hand.HANDEDNESS):
        shape = hand.HandShape(beta, side)
        for k in range(T):
            local = hand.forward_kinematics(shape, hand.HandPose(theta[k, c]))
            joints[k, c] = hand.place(local, hand.HandPlacement(O[k, c], hand_wrist[k, c]))
    length = hand.hand_length(hand.forward_kinematics(hand.HandShape(beta), hand.HandPose()))

    chest_R = np.zeros((T, 2, 3, 3))
    chest_t = np.zeros((T, 2, 3))
    for i in range(2):
        centers = base + np.einsum("tij,j->ti", F, _CHEST_OFFSET[i])
        for k in range(T):
            look = np.cos(_CHEST_PITCH) * fwd[k] - np.sin(_CHEST_PITCH) * up[k]
            R = geom.look_at(centers[k], centers[k] + look)
            chest_R[k, i] = R
            chest_t[k, i] = -R @ centers[k]
    return {
        "body3d": body,
        "beta": beta,
        "hand_length": length,
        "theta": theta,
        "O": O,
        "wrist": hand_wrist,
        "joints": joints,
        "chest_R": chest_R,
        "chest_t": chest_t,
        "division_ratio": a,
        "time_scale": motion.k,
    }


# ---------------------------------------------------------------------------
# observations


def _occlusion_states(rng, shape, p, mean_len):
    """Two-state Markov chain per series with stationary occupancy ``p``."""
    T = shape[0]
    out = np.zeros(shape, dtype=bool)
    if p <= 0:
        return out
    if p >= 1:
        out[:] = True
        return out
    leave = 1.0 / mean_len
    enter = min(1.0, p * leave / (1 - p))
    state = rng.random(shape[1:]) < p
    for k in range(T):
        out[k] = state
        u = rng.random(shape[1:])
        state = np.where(state, u >= leave, u < enter)
    return out


def _keypoint_noise(rng, sigma, shape):
    return rng.normal(0.0, 1.0, shape + (2,)) * sigma if sigma > 0 else np.zeros(shape + (2,))


def _confidence(noise, sigma):
    if sigma <= 0:
        return np.ones(noise.shape[:-1])
    return np.clip(1 - np.linalg.norm(noise, axis=-1) / (3 * sigma), 0.05, 1.0)


def render_observations(gt, cameras, cfg, rng):
    """Fixed-camera 2D observations: body keypoints, hand joints, boxes and masks."""
    T, N = gt["body3d"].shape[0], len(cameras)
    body_clean = np.zeros((T, N, N_BODY, 2))
    body_front = np.zeros((T, N, N_BODY), dtype=bool)
    hand_clean = np.zeros((T, N, 2, hand.N_JOINTS, 2))
    hand_in = np.zeros((T, N, 2), dtype=bool)
    for n, cam in enumerate(cameras):
        body_clean[:, n], body_front[:, n] = geom.project(cam, gt["body3d"])
        uv, vis = geom.project(cam, gt["joints"])
        hand_clean[:, n] = uv
        hand_in[:, n] = vis.all(-1)

    occluded = _occlusion_states(rng, (T, N, 2), cfg.occlusion_prob, cfg.occlusion_mean_frames)
    hand_vis = hand_in & ~occluded

    # body keypoints: hidden wrists and out-of-frame joints get the occluded model
    hidden = ~body_front.copy()
    for c in range(2):
        hidden[:, :, _WRIST[c]] |= occluded[:, :, c]
    noise = _keypoint_noise(rng, cfg.keypoint_sigma_px, (T, N, N_BODY))
    big = _keypoint_noise(rng, cfg.occluded_sigma_px, (T, N, N_BODY))
    low_conf = rng.uniform(0.0, 0.3, (T, N, N_BODY))
    conf = np.where(hidden, low_conf, _confidence(noise, cfg.keypoint_sigma_px))
    body = np.concatenate([body_clean + np.where(hidden[..., None], big, noise), conf[..., None]], -1)

    hnoise = _keypoint_noise(rng, cfg.keypoint_sigma_px, (T, N, 2, hand.N_JOINTS))
    joints2d = np.where(hand_vis[..., None, None], hand_clean + hnoise, 0.0)
    bbox = np.zeros((T, N, 2, 4))
    masks = {}
    for k in range(T):
        for n in range(N):
            for c in range(2):
                if not hand_vis[k, n, c]:
                    continue
                uv = joints2d[k, n, c]
                bbox[k, n, c] = [*uv.min(0), *uv.max(0)]
                m = hull_mask(hand_clean[k, n, c], cfg.image_width, cfg.image_height, 2.0)
                if m is not None:
                    masks[(k, n, c)] = Mask(*m).to_dict()
    return {
        "body_kp": body,
        "body_kp_clean": body_clean,
        "hand_visible": hand_vis,
        "hand_in_view": hand_in,
        "hand_joints2d": joints2d,
        "hand_bbox": bbox,
        "masks": masks,
    }


def _small_rotation(rng, sigma, size):
    if sigma <= 0:
        return np.broadcast_to(np.eye(3), tuple(size) + (3, 3)).copy()
    return geom.axis_angle_to_matrix(rng.normal(0, sigma, tuple(size) + (3,)))


def render_chest(gt, intrinsics, markers, cfg, rng):
    """Marker pixels and hand-estimator outputs seen by the two chest cameras."""
    T = gt["body3d"].shape[0]
    M = len(markers)
    marker_px = np.zeros((T, 2, M, 2))
    marker_vis = np.zeros((T, 2, M), dtype=bool)
    hvis = np.zeros((T, 2, 2), dtype=bool)
    hbox = np.zeros((T, 2, 2, 4))
    hO = np.broadcast_to(np.eye(3), (T, 2, 2, 3, 3)).copy()
    hbeta = np.zeros((T, 2, 2, hand.N_BETA))
    htheta = np.zeros((T, 2, 2, 15, 3))
    dropout = rng.random(T) < cfg.marker_dropout
    for i in range(2):
        for k in range(T):
            cam = intrinsics[i].with_pose(gt["chest_R"][k, i], gt["chest_t"][k, i])
            uv, vis = geom.project(cam, markers)
            marker_px[k, i] = uv + _keypoint_noise(rng, cfg.marker_sigma_px, (M,))
            marker_vis[k, i] = vis & ~dropout[k]
            for c in range(2):
                juv, jvis = geom.project(cam, gt["joints"][k, c])
                jitter = rng.normal(0, cfg.bbox_jitter_px, 4) if cfg.bbox_jitter_px > 0 else 0.0
                rot_noise = _small_rotation(rng, cfg.est_rot_sigma, ())
                beta_noise = rng.normal(0, cfg.est_beta_sigma, hand.N_BETA) if cfg.est_beta_sigma > 0 else 0.0
                theta_noise = rng.normal(0, cfg.est_theta_sigma, (15, 3)) if cfg.est_theta_sigma > 0 else 0.0
                if not jvis.all():
                    continue
                lo, hi = juv.min(0), juv.max(0)
                pad = 0.1 * (hi - lo) + 4.0
                box = np.concatenate([lo - pad, hi + pad]) + jitter
                box = np.clip(box, 0, cfg.chest_size - 1)
                if not (box[2] > box[0] and box[3] > box[1]):
                    continue
                crop = annot.virtual_crop(box, intrinsics[i])
                hvis[k, i, c] = True
                hbox[k, i, c] = box
                hO[k, i, c] = rot_noise @ crop.R_C @ gt["chest_R"][k, i] @ gt["O"][k, c]
                hbeta[k, i, c] = gt["beta"] + beta_noise
                htheta[k, i, c] = geom.canonical_axis_angle(gt["theta"][k, c] + theta_noise)
    return {
        "marker_px": marker_px,
        "marker_visible": marker_vis,
        "chest_hand_visible": hvis,
        "chest_hand_bbox": hbox,
        "chest_hand_O": hO,
        "chest_hand_beta": hbeta,
        "chest_hand_theta": htheta,
    }


def random_gauge(rng):
    return SimilarityTransform(float(np.exp(rng.uniform(np.log(0.5), np.log(2.0)))),
                               geom.random_rotation(rng), rng.normal(0, 2.0, 3))


def corrupt_slam(chest_gt, gauge, sigma_t, sigma_R, rng=None):
    """Express a world trajectory in an unknown SLAM gauge, with per-frame noise.

    ``gauge`` maps SLAM coordinates to world coordinates; its inverse is applied
    here. ``sigma_t`` (meters, per axis, world units) perturbs camera centers and
    ``sigma_R`` (radians) perturbs orientations.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    n = len(chest_gt)
    centers = chest_gt.centers
    if sigma_t > 0:
        centers = centers + rng.normal(0, sigma_t, centers.shape)
    orient = chest_gt.orientations
    if sigma_R > 0:
        orient = orient @ _small_rotation(rng, sigma_R, (n,))
    return Trajectory.from_centers(chest_gt.frames, gauge.R.T @ orient,
                                   gauge.inverse_apply(centers), "slam")


def generate_scene(cfg):
    """Ground truth plus every observation stream for one scene."""
    cfg.validate()
    ss = np.random.SeedSequence(cfg.seed)
    motion_rng, obs_rng, chest_rng, slam_rng = (np.random.default_rng(s) for s in ss.spawn(4))
    cameras = make_rig(cfg)
    intrinsics = make_chest_intrinsics(cfg)
    markers = make_markers(cfg)
    gt = simulate_ground_truth(cfg, motion_rng)
    obs = render_observations(gt, cameras, cfg, obs_rng)
    chest = render_chest(gt, intrinsics, markers, cfg, chest_rng)
    slam_R = np.zeros((cfg.n_frames, 2, 3, 3))
    slam_t = np.zeros((cfg.n_frames, 2, 3))
    gauges = []
    for i in range(2):
        gauge = random_gauge(slam_rng)
        gauges.append(gauge)
        traj = Trajectory(np.arange(cfg.n_frames), gt["chest_R"][:, i], gt["chest_t"][:, i])
        slam = corrupt_slam(traj, gauge, cfg.slam_sigma_t, cfg.slam_sigma_R, slam_rng)
        slam_R[:, i], slam_t[:, i] = slam.R, slam.t
    gt["gauge_s"] = np.array([g.s for g in gauges])
    gt["gauge_R"] = np.array([g.R for g in gauges])
    gt["gauge_t"] = np.array([g.t for g in gauges])
    return SceneRecording(config=cfg, cameras=cameras, chest_intrinsics=intrinsics,
                          markers=markers, gt=gt, slam_R=slam_R, slam_t=slam_t, **obs, **chest)
