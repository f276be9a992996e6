"""Pinhole cameras, poses and ray generation.

Camera frame convention (used by every module): +x right, +y down, +z
forward (the optical axis points into the scene).  Poses are
camera-to-world: ``p_world = R @ p_cam + t``; ``t`` is the camera centre.
Pixel ``(row i, col j)`` has its centre at continuous coordinates
``(x, y) = (j + 0.5, i + 0.5)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Pose:
    """Camera-to-world rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0):
            raise ValueError("pose rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("pose rotation must have det +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def as_row_major(self) -> list[float]:
        """12 numbers: the 3x4 matrix [R | t] in row-major order."""
        return np.hstack([self.rotation, self.translation[:, None]]).ravel().tolist()

    @classmethod
    def from_row_major(cls, values) -> "Pose":
        m = np.asarray(values, dtype=np.float64).reshape(3, 4)
        return cls(m[:, :3], m[:, 3])

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        if self.t_near > self.t_far:
            raise ValueError(f"t_near={self.t_near} > t_far={self.t_far}")

    def at(self, t):
        return self.origin + np.multiply.outer(t, self.direction)


def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose at ``eye`` looking at ``target`` (+z forward, +y down)."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    if np.linalg.norm(right) < 1e-9:
        raise ValueError("up vector parallel to viewing direction")
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward], axis=1)
    return Pose(R, eye)


def pixel_ray(intr: CameraIntrinsics, pose: Pose, px, bounds) -> Ray:
    """Ray through continuous pixel coordinates ``px = (x, y)``."""
    x, y = float(px[0]), float(px[1])
    if not (0.0 <= x <= intr.width and 0.0 <= y <= intr.height):
        raise ValueError(f"pixel ({x}, {y}) outside {intr.width}x{intr.height} image")
    d_cam = np.array([(x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0])
    d_cam /= np.linalg.norm(d_cam)
    d = pose.rotation @ d_cam
    d /= np.linalg.norm(d)
    return Ray(pose.translation.copy(), d, float(bounds[0]), float(bounds[1]))


def pixel_directions_cam(intr: CameraIntrinsics, rows, cols) -> np.ndarray:
    """Unit camera-frame directions through the centres of pixels (rows, cols)."""
    x = (np.asarray(cols, dtype=np.float64) + 0.5 - intr.cx) / intr.fx
    y = (np.asarray(rows, dtype=np.float64) + 0.5 - intr.cy) / intr.fy
    d = np.stack([x, y, np.ones_like(x)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def pixel_rays(intr: CameraIntrinsics, pose: Pose, rows, cols):
    """Batched world-frame (origins, directions) through pixel centres."""
    d = pixel_directions_cam(intr, rows, cols) @ pose.rotation.T
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    o = np.broadcast_to(pose.translation, d.shape).copy()
    return o, d


def project_points(intr: CameraIntrinsics, pose: Pose, points) -> np.ndarray:
    """World points -> continuous pixel coordinates (x, y)."""
    p_cam = (np.asarray(points, dtype=np.float64) - pose.translation) @ pose.rotation
    x = intr.fx * p_cam[..., 0] / p_cam[..., 2] + intr.cx
    y = intr.fy * p_cam[..., 1] / p_cam[..., 2] + intr.cy
    return np.stack([x, y], axis=-1)


def camera_normal_to_world(pose: Pose, n_cam) -> np.ndarray:
    """Rotate camera-frame normals (..., 3) into the world frame."""
    n_cam = np.asarray(n_cam, dtype=np.float64)
    norms = np.linalg.norm(n_cam, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("camera_normal_to_world expects unit normals")
    return n_cam @ pose.rotation.T


def rotation_about_axis(axis, angle) -> np.ndarray:
    """Rodrigues rotation matrix."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


def ray_box_bounds(origins, directions, bbox_min, bbox_max, min_near=1e-4):
    """Slab-method (t_near, t_far) per ray; rays missing the box get t_near == t_far."""
    o = np.asarray(origins, dtype=np.float64)
    d = np.asarray(directions, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (np.asarray(bbox_min) - o) * inv
        t1 = (np.asarray(bbox_max) - o) * inv
    lo = np.nanmax(np.minimum(t0, t1), axis=-1)
    hi = np.nanmin(np.maximum(t0, t1), axis=-1)
    lo = np.maximum(lo, min_near)
    miss = hi <= lo
    hi = np.where(miss, lo, hi)
    return lo, hi
