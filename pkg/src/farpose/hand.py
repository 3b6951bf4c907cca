"""Simplified 21-joint parametric hand.

Joint order: 0 wrist, then four joints per digit (thumb, index, middle, ring,
pinky), proximal to distal. Each digit has three rotating joints (its first
three joints); the fourth joint is the tip. Wrist-local frame of the right
hand: +y along the fingers, +x toward the thumb, +z out of the back of the hand.
The left hand mirrors the right across x = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInput
from .geom import axis_angle_to_matrix, canonical_axis_angle

N_JOINTS = 21
N_DIGITS = 5
N_BETA = 10
MIDDLE_TIP = 12
HANDEDNESS = ("left", "right")

# digit base joints (x, y, z), meters
_BASES = np.array(
    [
        [0.025, 0.020, -0.005],
        [0.022, 0.085, 0.000],
        [0.000, 0.085, 0.000],
        [-0.020, 0.080, 0.000],
        [-0.038, 0.072, 0.000],
    ]
)
# rest-pose bone vectors per digit, base -> j2 -> j3 -> tip
_BONES = np.array(
    [
        [[0.022, 0.025, -0.004], [0.016, 0.020, -0.002], [0.012, 0.016, -0.001]],
        [[0.000, 0.042, 0.0], [0.000, 0.025, 0.0], [0.000, 0.020, 0.0]],
        [[0.000, 0.045, 0.0], [0.000, 0.028, 0.0], [0.000, 0.022, 0.0]],
        [[0.000, 0.042, 0.0], [0.000, 0.026, 0.0], [0.000, 0.021, 0.0]],
        [[0.000, 0.034, 0.0], [0.000, 0.020, 0.0], [0.000, 0.018, 0.0]],
    ]
)
PARENTS = np.array([-1] + [j - 1 if j % 4 != 1 else 0 for j in range(1, N_JOINTS)])


def digit_of(joint):
    return (joint - 1) // 4


@dataclass
class HandShape:
    beta: np.ndarray = field(default_factory=lambda: np.zeros(N_BETA))
    handedness: str = "right"

    def __post_init__(self):
        self.beta = np.clip(np.asarray(self.beta, dtype=float).reshape(N_BETA), -5.0, 5.0)
        if self.handedness not in HANDEDNESS:
            raise ValueError(f"handedness must be one of {HANDEDNESS}")


@dataclass
class HandPose:
    theta: np.ndarray = field(default_factory=lambda: np.zeros((15, 3)))

    def __post_init__(self):
        self.theta = canonical_axis_angle(np.asarray(self.theta, dtype=float).reshape(15, 3))


@dataclass
class HandPlacement:
    O: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.O = np.asarray(self.O, dtype=float).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=float).reshape(3)


def shape_multipliers(beta):
    """Per-beta scale factors used by the rest skeleton.

    Returns (global, per-digit[5], base_x, base_y, thumb_x, base_z_offset).
    """
    beta = np.asarray(beta, dtype=float)
    g = 1.0 + 0.05 * beta[..., 0]
    digit = 1.0 + 0.05 * beta[..., 1:6]
    bx = 1.0 + 0.05 * beta[..., 6]
    by = 1.0 + 0.05 * beta[..., 7]
    thumb_x = 1.0 + 0.05 * beta[..., 8]
    dz = 0.003 * beta[..., 9]
    return g, digit, bx, by, thumb_x, dz


def rest_skeleton(beta):
    """Digit base positions (5, 3) and bone vectors (5, 3, 3) for a right hand."""
    g, digit, bx, by, thumb_x, dz = shape_multipliers(np.clip(beta, -5, 5))
    bases = _BASES * np.array([bx, by, 1.0])
    bases[0, 0] *= thumb_x
    bases[:, 2] += dz
    bones = _BONES * digit[:, None, None]
    return g * bases, g * bones


def forward_kinematics(shape, pose):
    """Wrist-local joint positions (21, 3) in meters."""
    bases, bones = rest_skeleton(shape.beta)
    rots = axis_angle_to_matrix(pose.theta.reshape(5, 3, 3))
    joints = np.zeros((N_JOINTS, 3))
    for f in range(N_DIGITS):
        G = np.eye(3)
        p = bases[f]
        joints[1 + 4 * f] = p
        for k in range(3):
            G = G @ rots[f, k]
            p = p + G @ bones[f, k]
            joints[2 + 4 * f + k] = p
    if shape.handedness == "left":
        joints[:, 0] = -joints[:, 0]
    return joints


def template(handedness="right"):
    return forward_kinematics(HandShape(handedness=handedness), HandPose())


def place(joints, placement):
    """Rigidly move wrist-local joints into the world."""
    return np.asarray(joints, dtype=float) @ placement.O.T + placement.t


def hand_length(joints):
    joints = np.asarray(joints, dtype=float)
    return float(np.linalg.norm(joints[MIDDLE_TIP] - joints[0]))


def scale_to_physical(joints, measured_hand_length, reference=None):
    """Scale about the wrist so the wrist-to-middle-fingertip distance matches.

    A physical measurement is taken on a flat hand, so when ``joints`` is posed
    pass the same hand's rest-pose joints as ``reference``; the scale factor is
    then computed on the reference and applied to ``joints``.
    """
    if not measured_hand_length > 0:
        raise ValueError("measured hand length must be positive")
    joints = np.asarray(joints, dtype=float)
    current = hand_length(joints if reference is None else reference)
    if current <= 0:
        raise DegenerateInput("hand has zero length")
    return joints[0] + (joints - joints[0]) * (measured_hand_length / current)


def hand_state_to_dict(shape, pose, placement):
    return {
        "beta": [float(x) for x in shape.beta],
        "theta": [float(x) for x in pose.theta.ravel()],
        "O": [float(x) for x in placement.O.ravel()],
        "t": [float(x) for x in placement.t],
        "handedness": shape.handedness,
    }


def hand_state_from_dict(d):
    return (
        HandShape(d["beta"], d["handedness"]),
        HandPose(np.reshape(d["theta"], (15, 3))),
        HandPlacement(np.reshape(d["O"], (3, 3)), d["t"]),
    )
