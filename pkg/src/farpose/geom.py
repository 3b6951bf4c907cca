"""Geometric primitives: rotations, cameras, rays, triangulation, alignment, PnP.

Conventions used throughout the package:

* A camera's extrinsic rotation ``R`` maps world coordinates to camera
  coordinates, ``x_cam = R @ x_world + t``; the camera center is ``-R.T @ t``.
* Camera frames are x right, y down, z along the optical axis.
* Angles are radians internally. File formats carry degrees.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput, NoConvergence

PINHOLE = "pinhole"
FISHEYE = "fisheye-equidistant"
CAMERA_MODELS = (PINHOLE, FISHEYE)
POSE_FRAMES = ("marker", "slam", "world", "camera")


# ---------------------------------------------------------------------------
# rotations


def skew(v):
    v = np.asarray(v, dtype=float)
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    o = np.zeros_like(x)
    return np.stack(
        [np.stack([o, -z, y], -1), np.stack([z, o, -x], -1), np.stack([-y, x, o], -1)], -2
    )


def axis_angle_to_matrix(aa):
    """Rodrigues formula, vectorized over leading dimensions."""
    aa = np.asarray(aa, dtype=float)
    theta = np.linalg.norm(aa, axis=-1)[..., None, None]
    K = skew(aa)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, 2.0 * np.sin(safe / 2) ** 2 / safe**2)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a * K + b * (K @ K)


def matrix_to_axis_angle(R):
    """Inverse of :func:`axis_angle_to_matrix`; returned angle lies in [0, pi]."""
    R = np.asarray(R, dtype=float)
    if R.ndim > 2:
        flat = R.reshape(-1, 3, 3)
        return np.stack([matrix_to_axis_angle(r) for r in flat]).reshape(R.shape[:-2] + (3,))
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-7:
        return 0.5 * w
    if np.pi - angle < 1e-4:
        # near pi the antisymmetric part vanishes; take the axis from R + I
        M = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(M)))
        axis = M[:, k] / np.sqrt(max(M[k, k], 1e-300))
        axis /= np.linalg.norm(axis)
        if axis @ w < 0:
            axis = -axis
        return axis * angle
    return w / (2.0 * np.sin(angle)) * angle


def canonical_axis_angle(aa):
    """Wrap axis-angle vectors so their norm is at most pi."""
    aa = np.asarray(aa, dtype=float)
    n = np.linalg.norm(aa, axis=-1, keepdims=True)
    wrapped = np.mod(n + np.pi, 2 * np.pi) - np.pi
    scale = np.where(n > 0, wrapped / np.where(n > 0, n, 1.0), 0.0)
    return aa * scale


def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def random_rotation(rng, size=None):
    """Uniformly distributed rotation(s) from normalized Gaussian quaternions."""
    shape = (() if size is None else (size,)) + (4,)
    q = rng.standard_normal(shape)
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    return (
        R.shape[-2:] == (3, 3)
        and np.allclose(R @ np.swapaxes(R, -1, -2), np.eye(3), atol=tol)
        and np.allclose(np.linalg.det(R), 1.0, atol=tol)
    )


def rot6d_from_matrix(R):
    """First two columns of ``R`` stacked column-wise: (R[:,0], R[:,1])."""
    R = np.asarray(R, dtype=float)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def matrix_from_rot6d(v):
    """Gram-Schmidt a 6D vector back into a rotation matrix.

    Raises DegenerateInput when either half vanishes or the halves are parallel
    to within 1e-9 (relative).
    """
    v = np.asarray(v, dtype=float)
    a1, a2 = v[..., :3], v[..., 3:6]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    n2 = np.linalg.norm(a2, axis=-1, keepdims=True)
    if np.any(n1 <= 1e-300) or np.any(n2 <= 1e-300):
        raise DegenerateInput("zero-length column in 6D rotation")
    b1 = a1 / n1
    u2 = a2 - np.sum(b1 * a2, axis=-1, keepdims=True) * b1
    m2 = np.linalg.norm(u2, axis=-1, keepdims=True)
    if np.any(m2 <= 1e-9 * n2):
        raise DegenerateInput("parallel columns in 6D rotation")
    b2 = u2 / m2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def geodesic_deg(Ra, Rb):
    """Angle of ``Ra.T @ Rb`` in degrees, in [0, 180]."""
    Ra = np.asarray(Ra, dtype=float)
    Rb = np.asarray(Rb, dtype=float)
    D = np.swapaxes(Ra, -1, -2) @ Rb
    cos = (np.trace(D, axis1=-2, axis2=-1) - 1.0) / 2.0
    # atan2 keeps full precision near 0 and 180 degrees, unlike arccos of the trace
    w = np.stack([D[..., 2, 1] - D[..., 1, 2], D[..., 0, 2] - D[..., 2, 0],
                  D[..., 1, 0] - D[..., 0, 1]], axis=-1)
    sin = np.linalg.norm(w, axis=-1) / 2.0
    return np.degrees(np.arctan2(sin, cos))


def look_at(center, target, up=(0.0, 0.0, 1.0)):
    """World->camera rotation for a camera at ``center`` looking at ``target``."""
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    z /= np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, dtype=float))
    if np.linalg.norm(x) < 1e-9:
        raise DegenerateInput("viewing direction parallel to up vector")
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.stack([x, y, z])


# ---------------------------------------------------------------------------
# poses


@dataclass(frozen=True)
class RigidPose:
    """A camera pose stored as world->camera extrinsics in some reference frame."""

    R: np.ndarray
    t: np.ndarray
    frame: str = "world"

    def __post_init__(self):
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))
        if self.frame not in POSE_FRAMES:
            raise ValueError(f"unknown frame tag {self.frame!r}")
        if not np.all(np.isfinite(self.t)):
            raise ValueError("non-finite translation")

    @property
    def center(self):
        return -self.R.T @ self.t

    @property
    def orientation(self):
        """Camera->frame rotation (transpose of the extrinsic)."""
        return self.R.T

    @classmethod
    def from_center(cls, orientation, center, frame="world"):
        R = np.asarray(orientation, dtype=float).T
        return cls(R, -R @ np.asarray(center, dtype=float), frame)


@dataclass(frozen=True)
class SimilarityTransform:
    """``x -> s * (R @ x + t)``."""

    s: float
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError("scale must be positive")
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float).reshape(3, 3))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))

    def apply(self, x):
        return self.s * (np.asarray(x, dtype=float) @ self.R.T + self.t)

    def inverse_apply(self, y):
        return (np.asarray(y, dtype=float) / self.s - self.t) @ self.R

    @classmethod
    def identity(cls):
        return cls(1.0, np.eye(3), np.zeros(3))


# ---------------------------------------------------------------------------
# cameras


@dataclass
class Camera:
    model: str
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    fov_deg: float = 180.0

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=float).reshape(3)
        if self.model not in CAMERA_MODELS:
            raise ValueError(f"unknown camera model {self.model!r}")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")
        if self.model == FISHEYE and not 0 < self.fov_deg <= 180:
            raise ValueError("fisheye field of view must be in (0, 180]")

    @property
    def center(self):
        return -self.R.T @ self.t

    @property
    def pose(self):
        return RigidPose(self.R, self.t, "world")

    def with_pose(self, R, t):
        return Camera(self.model, self.fx, self.fy, self.cx, self.cy, self.width,
                      self.height, R, t, self.fov_deg)

    def to_camera(self, p_world):
        return np.asarray(p_world, dtype=float) @ self.R.T + self.t

    def project_camera_frame(self, p_cam):
        """Pixels and visibility for points given in this camera's frame."""
        p = np.asarray(p_cam, dtype=float)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        if self.model == PINHOLE:
            front = z > 1e-12
            zs = np.where(front, z, 1.0)
            u = self.fx * x / zs + self.cx
            v = self.fy * y / zs + self.cy
        else:
            rho = np.hypot(x, y)
            phi = np.arctan2(rho, z)
            rs = np.where(rho > 0, rho, 1.0)
            u = self.cx + self.fx * phi * np.where(rho > 0, x / rs, 0.0)
            v = self.cy + self.fy * phi * np.where(rho > 0, y / rs, 0.0)
            front = phi <= np.radians(self.fov_deg) / 2
        inside = (u >= 0) & (u <= self.width - 1) & (v >= 0) & (v <= self.height - 1)
        return np.stack([u, v], -1), front & inside

    def pixel_ray(self, uv):
        """Unit bearing vector (camera frame) through pixel(s) ``uv``."""
        uv = np.asarray(uv, dtype=float)
        mx = (uv[..., 0] - self.cx) / self.fx
        my = (uv[..., 1] - self.cy) / self.fy
        if self.model == PINHOLE:
            d = np.stack([mx, my, np.ones_like(mx)], -1)
            return d / np.linalg.norm(d, axis=-1, keepdims=True)
        phi = np.hypot(mx, my)
        ps = np.where(phi > 0, phi, 1.0)
        s = np.where(phi > 0, np.sin(phi) / ps, 1.0)
        return np.stack([mx * s, my * s, np.cos(phi)], -1)

    def world_ray(self, uv):
        """(center, unit direction) in world coordinates through pixel(s) ``uv``."""
        return self.center, self.pixel_ray(uv) @ self.R

    def to_dict(self):
        d = {
            "model": self.model,
            "fx": float(self.fx), "fy": float(self.fy),
            "cx": float(self.cx), "cy": float(self.cy),
            "width": int(self.width), "height": int(self.height),
            "R": [float(x) for x in self.R.ravel()],
            "t": [float(x) for x in self.t],
        }
        if self.model == FISHEYE:
            d["fov_deg"] = float(self.fov_deg)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["model"], d["fx"], d["fy"], d["cx"], d["cy"], d["width"], d["height"],
                   np.reshape(d["R"], (3, 3)), d["t"], d.get("fov_deg", 180.0))


def rig_to_dict(cameras):
    return {"cameras": [c.to_dict() for c in cameras]}


def rig_from_dict(d):
    return [Camera.from_dict(c) for c in d["cameras"]]


def project(cam, p_world):
    """Project world point(s); returns (pixels, visible)."""
    return cam.project_camera_frame(cam.to_camera(p_world))


def ray_direction(cam, p_world):
    """Unit direction from the camera center toward ``p_world``, in the camera frame."""
    d = cam.R @ (np.asarray(p_world, dtype=float) - cam.center)
    n = np.linalg.norm(d)
    if n < 1e-12:
        raise DegenerateInput("point coincides with the camera center")
    return d / n


# ---------------------------------------------------------------------------
# triangulation


def point_ray_distances(p, centers, dirs):
    diff = np.asarray(p, dtype=float) - np.asarray(centers, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    perp = diff - np.sum(diff * dirs, axis=-1, keepdims=True) * dirs
    return np.linalg.norm(perp, axis=-1)


def triangulate(centers, dirs):
    """Least-squares point closest to a bundle of rays.

    Returns the point and the RMS point-to-ray distance.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    dirs = np.asarray(dirs, dtype=float)
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    if centers.shape[0] == 1 and dirs.shape[0] > 1:
        centers = np.repeat(centers, dirs.shape[0], axis=0)
    if dirs.shape[0] < 2 or centers.shape != dirs.shape:
        raise DegenerateInput("need at least two rays with matching centers")
    cross = np.linalg.norm(np.cross(dirs[:, None], dirs[None, :]), axis=-1)
    if cross.max() < 1e-9:
        raise DegenerateInput("all rays are parallel")
    P = np.eye(3) - dirs[:, :, None] * dirs[:, None, :]
    A = P.sum(0)
    b = np.einsum("nij,nj->i", P, centers)
    p = np.linalg.solve(A, b)
    rms = float(np.sqrt(np.mean(point_ray_distances(p, centers, dirs) ** 2)))
    return p, rms


# ---------------------------------------------------------------------------
# similarity alignment


def umeyama(src, dst):
    """Similarity ``(s, R, t)`` minimizing sum ||dst_i - s (R src_i + t)||^2."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise DegenerateInput("src and dst must be matching (n, 3) arrays")
    if len(src) < 3:
        raise DegenerateInput("need at least three correspondences")
    mu_s, mu_d = src.mean(0), dst.mean(0)
    xs, xd = src - mu_s, dst - mu_d
    sv = np.linalg.svd(xs, compute_uv=False)
    if sv[0] <= 1e-12 or sv[1] <= 1e-9 * sv[0]:
        raise DegenerateInput("source points are collinear")
    n = len(src)
    cov = xd.T @ xs / n
    U, D, Vt = np.linalg.svd(cov)
    S = np.ones(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2] = -1.0
    R = U @ np.diag(S) @ Vt
    var_s = np.sum(xs**2) / n
    s = float(np.sum(D * S) / var_s)
    # dst = s R src + t'  and  t' = s t
    t = (mu_d - s * R @ mu_s) / s
    return SimilarityTransform(s, R, t)


# ---------------------------------------------------------------------------
# PnP


def _normalize_points(X):
    mu = X.mean(0)
    scale = np.sqrt(3) / max(np.sqrt(np.mean(np.sum((X - mu) ** 2, 1))), 1e-12)
    return mu, scale


def _dlt_general(X, b):
    mu, sc = _normalize_points(X)
    Xn = (X - mu) * sc
    Xh = np.hstack([Xn, np.ones((len(X), 1))])
    A = np.vstack([np.kron(skew(bi), xi[None, :]) for xi, bi in zip(Xh, b)])
    P = np.linalg.svd(A)[2][-1].reshape(3, 4)
    if np.linalg.det(P[:, :3]) < 0:
        P = -P
    U, S, Vt = np.linalg.svd(P[:, :3])
    R = U @ Vt
    t_n = P[:, 3] / S.mean()
    return R, t_n / sc - R @ mu


def _dlt_planar(X, b):
    mu = X.mean(0)
    E = np.linalg.svd(X - mu)[2]  # rows: two in-plane axes, then the normal
    if np.linalg.det(E) < 0:
        E[2] = -E[2]
    Y = (X - mu) @ E.T
    sc = np.sqrt(2) / max(np.sqrt(np.mean(np.sum(Y[:, :2] ** 2, 1))), 1e-12)
    Yh = np.hstack([Y[:, :2] * sc, np.ones((len(X), 1))])
    A = np.vstack([np.kron(skew(bi), yi[None, :]) for yi, bi in zip(Yh, b)])
    H = np.linalg.svd(A)[2][-1].reshape(3, 3)
    lam = (np.linalg.norm(H[:, 0]) + np.linalg.norm(H[:, 1])) / 2
    if np.mean(np.sum(b * (Yh @ H.T), 1)) < 0:
        lam = -lam
    r1, r2, tp = H[:, 0] / lam, H[:, 1] / lam, H[:, 2] / lam
    U, _, Wt = np.linalg.svd(np.stack([r1, r2, np.cross(r1, r2)], 1))
    Rp = U @ np.diag([1, 1, np.linalg.det(U @ Wt)]) @ Wt
    R = Rp @ E
    return R, tp / sc - R @ mu


def _reprojection_residuals(cam, R, t, X, uv):
    pix, _ = cam.project_camera_frame(X @ R.T + t)
    return (pix - uv).ravel()


def pnp_markers(points3d, pixels, cam, max_iter=100, tol=1e-10):
    """Camera pose from 3D-2D marker correspondences.

    Linear initialization on bearing vectors (homography when the markers are
    coplanar, full DLT otherwise) refined by Levenberg-damped Gauss-Newton on
    pixel reprojection error. ``cam`` supplies intrinsics and the projection
    model; its extrinsics are ignored.

    Returns ``(RigidPose(frame="marker"), rms_px)``.
    """
    X = np.asarray(points3d, dtype=float)
    uv = np.asarray(pixels, dtype=float)
    if len(X) < 4 or X.shape != (len(uv), 3):
        raise DegenerateInput("PnP needs at least four 3D-2D correspondences")
    mu = X.mean(0)
    sv = np.linalg.svd(X - mu, compute_uv=False)
    if sv[1] <= 1e-9 * max(sv[0], 1e-300):
        raise DegenerateInput("marker points are collinear")
    b = cam.pixel_ray(uv)
    if sv[2] > 1e-6 * sv[0] and len(X) >= 6:
        R, t = _dlt_general(X, b)
    else:
        R, t = _dlt_planar(X, b)

    def cost(R_, t_):
        r = _reprojection_residuals(cam, R_, t_, X, uv)
        return r, float(r @ r)

    r, c = cost(R, t)
    lam = 1e-3
    h = 1e-7
    for _ in range(max_iter):
        J = np.empty((len(r), 6))
        for k in range(6):
            d = np.zeros(6)
            d[k] = h
            Rp, tp = axis_angle_to_matrix(d[:3]) @ R, t + d[3:]
            Rm, tm = axis_angle_to_matrix(-d[:3]) @ R, t - d[3:]
            J[:, k] = (_reprojection_residuals(cam, Rp, tp, X, uv)
                       - _reprojection_residuals(cam, Rm, tm, X, uv)) / (2 * h)
        JtJ = J.T @ J
        g = J.T @ r
        step = -np.linalg.solve(JtJ + lam * np.diag(np.diag(JtJ) + 1e-12), g)
        Rn = axis_angle_to_matrix(step[:3]) @ R
        tn = t + step[3:]
        rn, cn = cost(Rn, tn)
        if cn <= c:
            R, t, r, c = Rn, tn, rn, cn
            lam = max(lam / 10, 1e-12)
        else:
            lam *= 10
        if np.linalg.norm(step) < tol or c == 0.0:
            break
    else:
        raise NoConvergence(f"PnP did not converge in {max_iter} iterations")
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    rms = float(np.sqrt(c / len(X)))
    return RigidPose(R, t, "marker"), rms


def pairs(n):
    return list(itertools.combinations(range(n), 2))


@dataclass
class Trajectory:
    """Time-indexed camera poses (world->camera extrinsics) in one reference frame."""

    frames: np.ndarray
    R: np.ndarray
    t: np.ndarray
    frame: str = "world"

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=int).reshape(-1)
        self.R = np.asarray(self.R, dtype=float).reshape(-1, 3, 3)
        self.t = np.asarray(self.t, dtype=float).reshape(-1, 3)
        if not len(self.frames) == len(self.R) == len(self.t):
            raise ValueError("frames, R and t must have equal length")
        if self.frame not in POSE_FRAMES:
            raise ValueError(f"unknown frame tag {self.frame!r}")

    def __len__(self):
        return len(self.frames)

    @property
    def centers(self):
        return -np.einsum("nji,nj->ni", self.R, self.t)

    @property
    def orientations(self):
        return np.swapaxes(self.R, -1, -2)

    def pose(self, i):
        return RigidPose(self.R[i], self.t[i], self.frame)

    @classmethod
    def from_centers(cls, frames, orientations, centers, frame="world"):
        R = np.swapaxes(np.asarray(orientations, dtype=float), -1, -2)
        return cls(frames, R, -np.einsum("nij,nj->ni", R, centers), frame)
