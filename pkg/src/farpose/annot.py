"""Automatic hand annotation from chest fisheye cameras and fixed room cameras.

Chest-camera poses come from ceiling-marker PnP fused with a dense SLAM
trajectory; the hand orientation estimated in a virtual undistorted crop is
rotated into the world; the wrist position comes from triangulating fixed-camera
body keypoints and sliding along the forearm to best cover the hand masks.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import geom, hand
from .errors import DegenerateInput, NoConvergence, TriangulationFailure
from .geom import Camera, SimilarityTransform, Trajectory

log = logging.getLogger(__name__)

# COCO body keypoint indices, per hand (left, right)
WRIST_KP = (9, 10)
ELBOW_KP = (7, 8)


@dataclass
class AnnotConfig:
    tau_pair: float = 0.05
    tau_final: float = 0.075
    min_confidence: float = 0.3
    ratio_step: float = 0.05
    crop_size: int = 256


@dataclass
class AlignedTrajectory:
    trajectory: Trajectory
    transform: SimilarityTransform
    residual_frames: np.ndarray
    residuals: np.ndarray


@dataclass
class VirtualCrop:
    bbox: tuple
    camera: Camera
    R_C: np.ndarray
    fov: float


@dataclass
class TriangulationResult:
    point: np.ndarray
    inliers: list
    rms: float


# ---------------------------------------------------------------------------
# chest camera trajectory


def chest_poses_from_markers(marker_px, marker_visible, intrinsics, marker_world, frames=None):
    """Per-frame PnP against the ceiling markers.

    Frames with fewer than four visible markers, or where PnP fails, are left
    out of the returned (sparse) trajectory.
    """
    marker_px = np.asarray(marker_px, dtype=float)
    marker_visible = np.asarray(marker_visible, dtype=bool)
    frames = np.arange(len(marker_px)) if frames is None else np.asarray(frames)
    out_f, out_R, out_t, rms = [], [], [], []
    for f, px, vis in zip(frames, marker_px, marker_visible):
        if vis.sum() < 4:
            continue
        try:
            pose, err = geom.pnp_markers(marker_world[vis], px[vis], intrinsics)
        except (DegenerateInput, NoConvergence) as exc:
            log.debug("frame %d: marker PnP failed (%s)", f, exc)
            continue
        out_f.append(f)
        out_R.append(pose.R)
        out_t.append(pose.t)
        rms.append(err)
    traj = Trajectory(np.array(out_f, dtype=int), np.reshape(out_R, (-1, 3, 3)),
                      np.reshape(out_t, (-1, 3)), "marker")
    traj.rms_px = np.array(rms)
    return traj


def align_trajectories(marker_traj, slam_traj):
    """Bring the dense SLAM trajectory into the marker (world) frame.

    Solves for ``s, R, t`` minimizing sum ||c_marker - s (R c_slam + t)||^2 over
    the camera centers at common frames, then maps every SLAM pose.
    """
    common, im, is_ = np.intersect1d(marker_traj.frames, slam_traj.frames, return_indices=True)
    if len(common) < 3:
        raise DegenerateInput("need at least three common frames to align trajectories")
    src = slam_traj.centers[is_]
    dst = marker_traj.centers[im]
    sim = geom.umeyama(src, dst)
    centers = sim.apply(slam_traj.centers)
    orient = sim.R @ slam_traj.orientations
    world = Trajectory.from_centers(slam_traj.frames, orient, centers, "world")
    residuals = np.linalg.norm(dst - sim.apply(src), axis=1)
    return AlignedTrajectory(world, sim, common, residuals)


def hand_orientation_to_world(O, R_C, R_world_chest):
    """``O_world = R_world_chest.T @ R_C.T @ O``.

    ``O`` is the hand orientation in the virtual crop camera, ``R_C`` rotates
    chest-camera coordinates into the crop camera and ``R_world_chest`` is the
    chest camera's world->camera rotation.
    """
    return np.asarray(R_world_chest).T @ np.asarray(R_C).T @ np.asarray(O)


def rotation_between(a, b):
    """Smallest rotation taking unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, dtype=float) / np.linalg.norm(a)
    b = np.asarray(b, dtype=float) / np.linalg.norm(b)
    axis = np.cross(a, b)
    s, c = np.linalg.norm(axis), float(a @ b)
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        perp = np.cross(a, [1.0, 0, 0] if abs(a[0]) < 0.9 else [0, 1.0, 0])
        return geom.axis_angle_to_matrix(np.pi * perp / np.linalg.norm(perp))
    return geom.axis_angle_to_matrix(axis / s * np.arctan2(s, c))


def virtual_crop(bbox, chest_cam, size=256):
    """Undistorted pinhole camera aimed at the center of ``bbox``.

    ``bbox = (u0, v0, u1, v1)`` in chest-image pixels. The crop camera shares
    the chest camera's center, looks along the back-projected box center and
    spans the angle subtended by the longer box side across ``size`` pixels.
    """
    u0, v0, u1, v1 = (float(x) for x in bbox)
    if not (u1 > u0 and v1 > v0):
        raise DegenerateInput("bounding box has zero area")
    uc, vc = (u0 + u1) / 2, (v0 + v1) / 2
    d = chest_cam.pixel_ray([uc, vc])
    R_C = rotation_between(d, [0.0, 0.0, 1.0])
    if u1 - u0 >= v1 - v0:
        a, b = chest_cam.pixel_ray([[u0, vc], [u1, vc]])
    else:
        a, b = chest_cam.pixel_ray([[uc, v0], [uc, v1]])
    fov = float(np.arctan2(np.linalg.norm(np.cross(a, b)), a @ b))
    f = (size / 2) / np.tan(fov / 2)
    cam = Camera(geom.PINHOLE, f, f, size / 2, size / 2, size, size,
                 R_C @ chest_cam.R, R_C @ chest_cam.t)
    return VirtualCrop((u0, v0, u1, v1), cam, R_C, fov)


# ---------------------------------------------------------------------------
# fixed-camera wrist triangulation


def _triangulate_subset(rays, subset):
    centers = np.array([rays[i][0] for i in subset])
    dirs = np.array([rays[i][1] for i in subset])
    return geom.triangulate(centers, dirs)


def reliable_triangulate(pixels, confidences, cameras, tau_pair=0.05, tau_final=0.075,
                         min_confidence=0.0):
    """Triangulate one keypoint from the cameras that agree with each other.

    A camera pair whose two-ray triangulation has RMS ray distance below
    ``tau_pair`` marks both cameras reliable; the union of reliable cameras is
    triangulated and accepted when its RMS ray distance is below ``tau_final``.
    If the union fails, the largest mutually consistent camera subsets are tried
    before giving up with :class:`TriangulationFailure`.
    """
    pixels = np.asarray(pixels, dtype=float)
    confidences = np.asarray(confidences, dtype=float)
    usable = [i for i in range(len(cameras))
              if confidences[i] >= min_confidence and np.all(np.isfinite(pixels[i]))]
    if len(usable) < 2:
        raise TriangulationFailure("fewer than two usable observations")
    rays = {i: cameras[i].world_ray(pixels[i]) for i in usable}
    ok = {}
    for i, j in itertools.combinations(usable, 2):
        try:
            ok[i, j] = _triangulate_subset(rays, (i, j))[1] < tau_pair
        except DegenerateInput:
            ok[i, j] = False
    reliable = sorted({c for pair, good in ok.items() if good for c in pair})
    if not reliable:
        raise TriangulationFailure("no camera pair agrees")
    p, err = _triangulate_subset(rays, reliable)
    if err < tau_final:
        return TriangulationResult(p, reliable, err)
    for size in range(len(reliable) - 1, 1, -1):
        best = None
        for subset in itertools.combinations(reliable, size):
            if not all(ok[pair] for pair in itertools.combinations(subset, 2)):
                continue
            p, err = _triangulate_subset(rays, subset)
            if err < tau_final and (best is None or err < best.rms):
                best = TriangulationResult(p, list(subset), err)
        if best is not None:
            return best
    raise TriangulationFailure(f"final ray error {err:.3f} m exceeds {tau_final} m")


def division_ratio(elbow, wrist, joints_local, O, masks, step=0.05):
    """Grid-search the wrist position along the wrist->elbow segment.

    ``masks`` is a list of ``(Camera, Mask)``. For each candidate ratio the hand
    is placed with its wrist at ``(1 - a) wrist + a elbow``; the score sums, over
    cameras, the fraction of projected joints inside the mask. Ties go to the
    smaller ratio.
    """
    elbow = np.asarray(elbow, dtype=float)
    wrist = np.asarray(wrist, dtype=float)
    if np.linalg.norm(elbow - wrist) < 1e-12:
        raise DegenerateInput("elbow and wrist coincide")
    if not masks:
        raise DegenerateInput("no masks to compare against")
    rotated = np.asarray(joints_local, dtype=float) @ np.asarray(O).T
    best_a, best_score = 0.0, -np.inf
    for a in np.round(np.arange(0, 1 + step / 2, step), 10):
        pts = rotated + (1 - a) * wrist + a * elbow
        score = 0.0
        for cam, mask in masks:
            uv, vis = geom.project(cam, pts)
            score += np.mean(mask.contains(uv) & vis)
        if score > best_score + 1e-12:
            best_a, best_score = float(a), score
    return best_a


# ---------------------------------------------------------------------------
# whole-scene pipeline


@dataclass
class AnnotationResult:
    records: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def to_json_obj(self):
        frames = {}
        for r in self.records:
            frames.setdefault(r["frame"], []).append(
                {k: v for k, v in r.items() if k not in ("frame", "joints_world")})
        return {"frames": [{"frame": f, "hands": hs} for f, hs in sorted(frames.items())],
                "stats": self.stats}


def annotate_scene(rec, cfg=None):
    """Run the full annotation pipeline on a :class:`SceneRecording`."""
    from .evaluation import mpjpe, pa_mpjpe

    cfg = cfg or AnnotConfig()
    T = rec.n_frames
    aligned = []
    skipped_marker = []
    for i, intr in enumerate(rec.chest_intrinsics):
        mtraj = chest_poses_from_markers(rec.marker_px[:, i], rec.marker_visible[:, i],
                                         intr, rec.markers)
        skipped_marker.append(int(T - len(mtraj)))
        slam = Trajectory(np.arange(T), rec.slam_R[:, i], rec.slam_t[:, i], "slam")
        aligned.append(align_trajectories(mtraj, slam))

    records = []
    failures = {"no_chest_view": 0, "triangulation": 0}
    measured = rec.gt["hand_length"]
    for t in range(T):
        for c, side in enumerate(hand.HANDEDNESS):
            chest = next((i for i in (c, 1 - c) if rec.chest_hand_visible[t, i, c]), None)
            if chest is None:
                failures["no_chest_view"] += 1
                continue
            crop = virtual_crop(rec.chest_hand_bbox[t, chest, c], rec.chest_intrinsics[chest],
                                cfg.crop_size)
            R_ext = aligned[chest].trajectory.R[t]
            O_w = hand_orientation_to_world(rec.chest_hand_O[t, chest, c], crop.R_C, R_ext)
            beta = rec.chest_hand_beta[t, chest, c]
            theta = rec.chest_hand_theta[t, chest, c]

            kp = rec.body_kp[t]
            try:
                wr = reliable_triangulate(kp[:, WRIST_KP[c], :2], kp[:, WRIST_KP[c], 2],
                                          rec.cameras, cfg.tau_pair, cfg.tau_final,
                                          cfg.min_confidence)
            except TriangulationFailure:
                failures["triangulation"] += 1
                continue
            shape = hand.HandShape(beta, side)
            local = hand.scale_to_physical(
                hand.forward_kinematics(shape, hand.HandPose(theta)), measured,
                reference=hand.forward_kinematics(shape, hand.HandPose()))
            masks = [(rec.cameras[n], rec.mask(t, n, c)) for n in range(rec.n_cameras)
                     if rec.mask(t, n, c) is not None]
            ratio = 0.0
            try:
                el = reliable_triangulate(kp[:, ELBOW_KP[c], :2], kp[:, ELBOW_KP[c], 2],
                                          rec.cameras, cfg.tau_pair, cfg.tau_final,
                                          cfg.min_confidence)
                if masks:
                    ratio = division_ratio(el.point, wr.point, local, O_w, masks, cfg.ratio_step)
                    wrist_w = (1 - ratio) * wr.point + ratio * el.point
                else:
                    wrist_w = wr.point
            except (TriangulationFailure, DegenerateInput):
                wrist_w = wr.point
            joints_w = hand.place(local, hand.HandPlacement(O_w, wrist_w))
            records.append({
                "frame": t,
                "handedness": side,
                "hand": {
                    "beta": [float(x) for x in beta],
                    "theta": [float(x) for x in np.ravel(theta)],
                    "O_world": [float(x) for x in O_w.ravel()],
                    "wrist_world": [float(x) for x in wrist_w],
                },
                "inliers": [int(i) for i in wr.inliers],
                "quality": {"ray_rms_m": float(wr.rms), "ratio": float(ratio),
                            "chest_camera": int(chest)},
                "joints_world": joints_w,
            })

    errs = [mpjpe(r["joints_world"], rec.gt["joints"][r["frame"], hand.HANDEDNESS.index(r["handedness"])])
            for r in records]

    pa = [pa_mpjpe(r["joints_world"], rec.gt["joints"][r["frame"], hand.HANDEDNESS.index(r["handedness"])])
          for r in records]
    stats = {
        "frames": T,
        "hand_frames_annotated": len(records),
        "marker_frames_skipped": skipped_marker,
        "failures": failures,
        "alignment_scale": [a.transform.s for a in aligned],
        "alignment_residual_rms_m": [float(np.sqrt(np.mean(a.residuals**2))) for a in aligned],
        "mpjpe_mm": float(np.mean(errs)) if errs else None,
        "pa_mpjpe_mm": float(np.mean(pa)) if pa else None,
    }
    return AnnotationResult(records, stats)
