"""Rigid-body pose algebra and pinhole camera geometry.

Poses are stored as a unit quaternion plus a translation. The same math
backs the visual-servoing error computation and the bounding-box label
generation for the grasp dataset.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation


class NonPositiveDepth(ValueError):
    """Point is at or behind the camera plane."""


class NotYawOnly(ValueError):
    """Relative rotation has an off-axis component beyond tolerance."""


# ---------------------------------------------------------------------------
# Pose


@dataclass(frozen=True)
class Pose:
    """Rotation (unit quaternion, xyzw) + translation (meters)."""

    rotation: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        n = np.linalg.norm(q)
        if n < 1e-12:
            raise ValueError("zero quaternion")
        object.__setattr__(self, "rotation", q / n)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity():
        return Pose()

    @staticmethod
    def from_rotvec(rotvec, translation=(0.0, 0.0, 0.0)):
        q = Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_quat()
        return Pose(q, np.asarray(translation, dtype=float))

    @staticmethod
    def from_matrix(R, translation=(0.0, 0.0, 0.0)):
        return Pose(Rotation.from_matrix(R).as_quat(), np.asarray(translation, dtype=float))

    @staticmethod
    def from_translation(translation):
        return Pose(np.array([0.0, 0.0, 0.0, 1.0]), np.asarray(translation, dtype=float))

    def rot(self):
        return Rotation.from_quat(self.rotation)

    def matrix(self):
        return self.rot().as_matrix()

    def apply(self, points):
        """Transform point(s) from this pose's frame into the parent frame."""
        return self.rot().apply(np.asarray(points, dtype=float)) + self.translation

    def compose(self, other):
        r = self.rot() * other.rot()
        t = self.rot().apply(other.translation) + self.translation
        return Pose(r.as_quat(), t)

    def invert(self):
        rinv = self.rot().inv()
        return Pose(rinv.as_quat(), -rinv.apply(self.translation))

    def rotvec(self):
        return self.rot().as_rotvec()

    def almost_equal(self, other, tol=1e-9):
        dp = self.invert().compose(other)
        ang = np.linalg.norm(dp.rotvec())
        return ang < tol and np.linalg.norm(dp.translation) < tol

    def to_list(self):
        return {"quat_xyzw": list(map(float, self.rotation)),
                "translation": list(map(float, self.translation))}

    @staticmethod
    def from_dict(d):
        return Pose(np.asarray(d["quat_xyzw"], dtype=float),
                    np.asarray(d["translation"], dtype=float))


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def invert(p: Pose) -> Pose:
    return p.invert()


def relative_pose(a: Pose, b: Pose) -> Pose:
    """Pose of b expressed in a's frame: a^-1 o b."""
    return a.invert().compose(b)


def pose_error(current: Pose, goal: Pose):
    """(translation error, rotation error as rotvec), both in the parent frame."""
    t_err = goal.translation - current.translation
    r_err = (goal.rot() * current.rot().inv()).as_rotvec()
    return t_err, r_err


# ---------------------------------------------------------------------------
# Camera


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    u0: float
    v0: float
    width: int
    height: int
    hand_eye: Pose = field(default_factory=Pose)  # end-effector -> camera

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.u0 < self.width and 0 <= self.v0 < self.height):
            raise ValueError("principal point outside image")

    def to_dict(self):
        return {"fx": self.fx, "fy": self.fy, "u0": self.u0, "v0": self.v0,
                "width": self.width, "height": self.height,
                "hand_eye": self.hand_eye.to_list()}


MIN_DEPTH = 1e-6


def project_point(cam: CameraModel, p_cam):
    """Pinhole projection of a camera-frame point to (u, v) pixels."""
    p = np.asarray(p_cam, dtype=float)
    z = p[..., 2]
    if np.any(z <= MIN_DEPTH):
        raise NonPositiveDepth(f"z={z} behind camera")
    u = cam.fx * p[..., 0] / z + cam.u0
    v = cam.fy * p[..., 1] / z + cam.v0
    return np.stack([u, v], axis=-1)


def pixel_to_point(cam: CameraModel, c, depth):
    """Back-project pixel c=(u, v) at the given depth to a camera-frame point."""
    if depth <= MIN_DEPTH:
        raise NonPositiveDepth(f"depth={depth}")
    u, v = float(c[0]), float(c[1])
    x = (u - cam.u0) * depth / cam.fx
    y = (v - cam.v0) * depth / cam.fy
    return np.array([x, y, depth])


# ---------------------------------------------------------------------------
# Pixel boxes and grasp labels


@dataclass(frozen=True)
class PixelBox:
    u1: float
    v1: float
    u2: float
    v2: float
    out_of_view: bool = False

    def __post_init__(self):
        if not (self.u1 < self.u2 and self.v1 < self.v2):
            raise ValueError("degenerate pixel box")

    @property
    def center(self):
        return np.array([(self.u1 + self.u2) / 2.0, (self.v1 + self.v2) / 2.0])

    @property
    def width(self):
        return self.u2 - self.u1

    @property
    def height(self):
        return self.v2 - self.v1

    def to_dict(self):
        return {"u1": float(self.u1), "v1": float(self.v1),
                "u2": float(self.u2), "v2": float(self.v2),
                "out_of_view": bool(self.out_of_view)}


@dataclass(frozen=True)
class GraspLabel:
    box: PixelBox
    yaw: float                 # rad, in (-pi, pi]
    relative_pose: Pose        # end-effector -> grasp at capture time

    def __post_init__(self):
        if not (-np.pi < self.yaw <= np.pi + 1e-12):
            raise ValueError("yaw outside (-pi, pi]")


# Margin between gripper opening at grasp and the labeled square's side.
SQUARE_MARGIN = 1.2


def grasp_square_to_bbox(cam: CameraModel, ee_pose: Pose, grasp_pose: Pose,
                         side: float) -> PixelBox:
    """Axis-aligned bbox of a square of `side` meters in the grasp frame's
    x-y plane, centered at the grasp position, as seen by the eye-in-hand
    camera at `ee_pose`."""
    if side <= 0:
        raise ValueError("side must be positive")
    h = side / 2.0
    corners_g = np.array([[h, h, 0.0], [h, -h, 0.0], [-h, -h, 0.0], [-h, h, 0.0]])
    cam_pose = ee_pose.compose(cam.hand_eye)
    corners_cam = relative_pose(cam_pose, grasp_pose).apply(corners_g)
    uv = project_point(cam, corners_cam)  # raises NonPositiveDepth per vertex
    u1, v1 = uv.min(axis=0)
    u2, v2 = uv.max(axis=0)
    oov = u1 < 0 or v1 < 0 or u2 > cam.width or v2 > cam.height
    return PixelBox(float(u1), float(v1), float(u2), float(v2), out_of_view=oov)


YAW_ONLY_TOL = 1e-3


def yaw_of_grasp(rel: Pose) -> float:
    """Yaw angle of a pure z-rotation relative pose, in (-pi, pi]."""
    rv = rel.rotvec()
    off_axis = np.linalg.norm(rv[:2])
    if off_axis > YAW_ONLY_TOL:
        raise NotYawOnly(f"off-axis rotation {off_axis:.2e} rad")
    yaw = float(rv[2])
    # rotvec already yields angle in [-pi, pi]; map -pi to +pi
    if yaw <= -np.pi:
        yaw += 2 * np.pi
    return yaw


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = float((a + np.pi) % (2 * np.pi) - np.pi)
    return a if a != -np.pi else np.pi
