"""Rigid-body geometry: SE(3) transforms, pose deltas, camera model, pose errors.

Conventions used throughout the package:

* Quaternions are (w, x, y, z), unit norm, renormalized after every operation.
* ``RigidTransform`` maps object-frame points into the camera frame:
  ``p_cam = R @ p_obj + t``.
* ``PoseDelta`` is the 6-vector chart (rotation vector in radians, then
  translation in meters) used as the forest regression target.
* Rotation errors are reported as X-Y-Z fixed-axis (roll/pitch/yaw) angles of
  the relative rotation ``truth⁻¹ · estimate``; at pitch = ±90° roll is set to
  zero and the residual folds into yaw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import IO, TYPE_CHECKING, Iterable, Sequence, Union

import numpy as np

from .errors import BehindCamera, NonPositiveDepth, EmptyMesh

if TYPE_CHECKING:
    from .render import TriangleMesh

_QUAT_TOL = 1e-9


def _as_unit_quaternion(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(4)
    norm = float(np.linalg.norm(q))
    if not np.isfinite(norm) or norm < 1e-12:
        raise ValueError(f"quaternion norm {norm} is not normalizable")
    q = q / norm
    q.setflags(write=False)
    return q


def _as_vec3(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64).reshape(3).copy()
    if not np.all(np.isfinite(v)):
        raise ValueError("vector components must be finite")
    v.setflags(write=False)
    return v


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array(
        [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's method, max-trace branch)."""
    m = np.asarray(m, dtype=np.float64)
    t = m[0, 0] + m[1, 1] + m[2, 2]
    if t > 0.0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    return q / np.linalg.norm(q)


def rotvec_to_quat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    angle = float(np.linalg.norm(v))
    if angle < 1e-12:
        # sin(a/2)/a ~ 1/2 - a^2/48 keeps the map exact at v = 0
        scale = 0.5 - angle * angle / 48.0
        return np.array([1.0 - angle * angle / 8.0, scale * v[0], scale * v[1], scale * v[2]])
    half = 0.5 * angle
    scale = math.sin(half) / angle
    return np.array([math.cos(half), scale * v[0], scale * v[1], scale * v[2]])


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    if w < 0.0:  # keep angle in [0, pi]
        w, x, y, z = -w, -x, -y, -z
    s = math.sqrt(x * x + y * y + z * z)
    if s < 1e-12:
        return np.array([2.0 * x, 2.0 * y, 2.0 * z])
    angle = 2.0 * math.atan2(s, w)
    scale = angle / s
    return np.array([scale * x, scale * y, scale * z])


def rotvecs_to_quats(v: np.ndarray) -> np.ndarray:
    """Vectorized rotvec -> quaternion for an (N, 3) array."""
    v = np.asarray(v, dtype=np.float64)
    angle = np.linalg.norm(v, axis=1)
    half = 0.5 * angle
    scale = np.where(angle < 1e-12, 0.5 - angle * angle / 48.0, np.sin(half) / np.maximum(angle, 1e-300))
    q = np.empty((v.shape[0], 4))
    q[:, 0] = np.cos(half)
    q[:, 1:] = v * scale[:, None]
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def quats_to_matrices(q: np.ndarray) -> np.ndarray:
    """Vectorized quaternion -> rotation matrix for an (N, 4) array."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    m = np.empty((q.shape[0], 3, 3))
    m[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    m[:, 0, 1] = 2.0 * (x * y - w * z)
    m[:, 0, 2] = 2.0 * (x * z + w * y)
    m[:, 1, 0] = 2.0 * (x * y + w * z)
    m[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    m[:, 1, 2] = 2.0 * (y * z - w * x)
    m[:, 2, 0] = 2.0 * (x * z - w * y)
    m[:, 2, 1] = 2.0 * (y * z + w * x)
    m[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return m


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) pose as unit quaternion (w, x, y, z) plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_unit_quaternion(self.rotation))
        object.__setattr__(self, "translation", _as_vec3(self.translation))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @staticmethod
    def from_matrix(m) -> "RigidTransform":
        """Build from a 3x4 or 4x4 row-major [R|t] matrix."""
        m = np.asarray(m, dtype=np.float64)
        if m.shape == (4, 4):
            m = m[:3, :]
        if m.shape != (3, 4):
            raise ValueError(f"expected 3x4 or 4x4 matrix, got {m.shape}")
        return RigidTransform(matrix_to_quat(m[:, :3]), m[:, 3])

    @staticmethod
    def from_rotvec(rotvec, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        return RigidTransform(rotvec_to_quat(np.asarray(rotvec, dtype=np.float64)), translation)

    @staticmethod
    def from_translation(x: float, y: float, z: float) -> "RigidTransform":
        return RigidTransform(np.array([1.0, 0.0, 0.0, 0.0]), np.array([x, y, z]))

    @cached_property
    def rotation_matrix(self) -> np.ndarray:
        m = quat_to_matrix(self.rotation)
        m.setflags(write=False)
        return m

    def matrix(self) -> np.ndarray:
        """Row-major 3x4 [R|t]."""
        return np.hstack([self.rotation_matrix, self.translation[:, None]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        points = np.asarray(points, dtype=np.float64)
        if points.ndim == 1:
            return self.rotation_matrix @ points + self.translation
        return points @ self.rotation_matrix.T + self.translation

    def rotation_angle(self) -> float:
        """Rotation magnitude in radians, in [0, pi]."""
        w = min(1.0, abs(float(self.rotation[0])))
        return 2.0 * math.acos(w)


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform applying ``b`` first, then ``a``."""
    q = quat_multiply(a.rotation, b.rotation)
    t = a.rotation_matrix @ b.translation + a.translation
    return RigidTransform(q, t)


def invert(t: RigidTransform) -> RigidTransform:
    q_inv = quat_conjugate(t.rotation)
    return RigidTransform(q_inv, -(t.rotation_matrix.T @ t.translation))


def relative(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``a⁻¹ · b``: the transform taking ``a`` to ``b``."""
    return compose(invert(a), b)


@dataclass(frozen=True)
class PoseDelta:
    """6-vector pose chart: (rotation vector [rad], translation [m])."""

    vector: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64).reshape(6).copy()
        if not np.all(np.isfinite(v)):
            raise ValueError("pose delta must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def rotation_vector(self) -> np.ndarray:
        return self.vector[:3]

    @property
    def translation(self) -> np.ndarray:
        return self.vector[3:]


def encode(t: RigidTransform) -> PoseDelta:
    """Chart an SE(3) transform as a 6-vector; exact zero at identity."""
    return PoseDelta(np.concatenate([quat_to_rotvec(t.rotation), t.translation]))


def decode(delta: Union[PoseDelta, np.ndarray]) -> RigidTransform:
    v = delta.vector if isinstance(delta, PoseDelta) else np.asarray(delta, dtype=np.float64).reshape(6)
    return RigidTransform(rotvec_to_quat(v[:3]), v[3:])


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera model; focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


DEFAULT_INTRINSICS = CameraIntrinsics(fx=575.0, fy=575.0, cx=319.5, cy=239.5, width=640, height=480)


def project(p, k: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of a camera-frame point to continuous pixel coords."""
    p = np.asarray(p, dtype=np.float64)
    if p[2] <= 0.0:
        raise BehindCamera(f"point depth {p[2]} is not positive")
    return np.array([k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy])


def backproject(u, depth: float, k: CameraIntrinsics) -> np.ndarray:
    """Invert ``project`` at a given metric depth."""
    if depth <= 0.0:
        raise NonPositiveDepth(f"depth {depth} is not positive")
    u = np.asarray(u, dtype=np.float64)
    return np.array([(u[0] - k.cx) * depth / k.fx, (u[1] - k.cy) * depth / k.fy, depth])


@dataclass(frozen=True)
class PoseError:
    """Per-axis absolute pose error: translation in mm, rotation in degrees."""

    t_x: float
    t_y: float
    t_z: float
    roll: float
    pitch: float
    yaw: float

    def translation_norm(self) -> float:
        return math.sqrt(self.t_x**2 + self.t_y**2 + self.t_z**2)

    def as_tuple(self) -> tuple:
        return (self.t_x, self.t_y, self.t_z, self.roll, self.pitch, self.yaw)


def matrix_to_rpy(m: np.ndarray) -> tuple:
    """X-Y-Z fixed-axis (roll, pitch, yaw) angles in radians.

    Decomposes R = Rz(yaw) @ Ry(pitch) @ Rx(roll). At the gimbal-lock rows
    (pitch = ±90°) roll is forced to zero and the residual goes to yaw.
    """
    sp = -float(m[2, 0])
    sp = max(-1.0, min(1.0, sp))
    pitch = math.asin(sp)
    if abs(sp) > 1.0 - 1e-12:
        roll = 0.0
        if sp > 0.0:
            yaw = -math.atan2(float(m[0, 1]), float(m[1, 1]))
        else:
            yaw = math.atan2(-float(m[0, 1]), float(m[1, 1]))
    else:
        roll = math.atan2(float(m[2, 1]), float(m[2, 2]))
        yaw = math.atan2(float(m[1, 0]), float(m[0, 0]))
    return roll, pitch, yaw


def pose_error(estimate: RigidTransform, truth: RigidTransform) -> PoseError:
    """Per-axis absolute errors: translation straight from the camera-frame
    difference, rotation from the relative rotation ``truth⁻¹ · estimate``."""
    dt = np.abs(estimate.translation - truth.translation) * 1000.0
    rel = quat_to_matrix(quat_multiply(quat_conjugate(truth.rotation), estimate.rotation))
    roll, pitch, yaw = matrix_to_rpy(rel)
    return PoseError(
        t_x=float(dt[0]),
        t_y=float(dt[1]),
        t_z=float(dt[2]),
        roll=abs(math.degrees(roll)),
        pitch=abs(math.degrees(pitch)),
        yaw=abs(math.degrees(yaw)),
    )


def add_distance(estimate: RigidTransform, truth: RigidTransform, mesh: "TriangleMesh") -> float:
    """Mean vertex displacement between the two poses (ADD score), meters."""
    vertices = mesh.vertices
    if len(vertices) == 0:
        raise EmptyMesh("add_distance needs a non-empty mesh")
    diff = estimate.apply(vertices) - truth.apply(vertices)
    return float(np.mean(np.linalg.norm(diff, axis=1)))


# ---------------------------------------------------------------------------
# Pose file format: one pose per line, 12 numbers = row-major 3x4 [R|t],
# meters, '#' starts a comment.
# ---------------------------------------------------------------------------

def format_pose_line(pose: Union[RigidTransform, np.ndarray]) -> str:
    m = pose.matrix() if isinstance(pose, RigidTransform) else np.asarray(pose, dtype=np.float64)
    if m.shape != (3, 4):
        raise ValueError(f"expected 3x4 pose matrix, got {m.shape}")
    return " ".join(repr(float(v)) for v in m.reshape(-1))


def parse_pose_line(line: str) -> np.ndarray:
    values = [float(tok) for tok in line.split()]
    if len(values) != 12:
        raise ValueError(f"pose line needs 12 numbers, got {len(values)}")
    return np.array(values, dtype=np.float64).reshape(3, 4)


def write_pose_file(path_or_file: Union[str, "IO[str]"], poses: Iterable[Union[RigidTransform, np.ndarray]]) -> None:
    lines = [format_pose_line(p) + "\n" for p in poses]
    if hasattr(path_or_file, "write"):
        path_or_file.writelines(lines)
    else:
        with open(path_or_file, "w") as f:
            f.writelines(lines)


def read_pose_file(path_or_file: Union[str, "IO[str]"]) -> list:
    """Read poses as raw 3x4 matrices (use ``RigidTransform.from_matrix`` to lift)."""
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file) as f:
            text = f.read()
    poses = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        poses.append(parse_pose_line(line))
    return poses
