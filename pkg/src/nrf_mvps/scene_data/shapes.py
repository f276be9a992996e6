"""Signed-distance shapes with analytic gradients."""

from __future__ import annotations

import numpy as np


class SDF:
    def distance(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def normal(self, p):
        g = self.gradient(p)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)


class Sphere(SDF):
    def __init__(self, radius=0.6, center=(0.0, 0.0, 0.0)):
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.radius = float(radius)
        self.center = np.asarray(center, dtype=np.float64)

    def distance(self, p):
        return np.linalg.norm(p - self.center, axis=-1) - self.radius

    def gradient(self, p):
        q = p - self.center
        return q / np.maximum(np.linalg.norm(q, axis=-1, keepdims=True), 1e-300)


class Torus(SDF):
    """Torus around the local z axis, tilted by ``rotation`` (local-to-world)."""

    def __init__(self, major=0.55, minor=0.22, rotation=None, center=(0.0, 0.0, 0.0)):
        if not (0 < minor < major):
            raise ValueError("torus needs 0 < minor < major radius")
        self.major, self.minor = float(major), float(minor)
        self.rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        self.center = np.asarray(center, dtype=np.float64)

    def _local(self, p):
        return (p - self.center) @ self.rotation

    def distance(self, p):
        q = self._local(p)
        rho = np.hypot(q[..., 0], q[..., 1])
        return np.hypot(rho - self.major, q[..., 2]) - self.minor

    def gradient(self, p):
        q = self._local(p)
        rho = np.maximum(np.hypot(q[..., 0], q[..., 1]), 1e-300)
        a = rho - self.major
        tube = np.maximum(np.hypot(a, q[..., 2]), 1e-300)
        g = np.stack([a / tube * q[..., 0] / rho, a / tube * q[..., 1] / rho, q[..., 2] / tube], axis=-1)
        return g @ self.rotation.T


class SmoothUnion(SDF):
    """Polynomial smooth-min blend of several shapes (blend width ``k``)."""

    def __init__(self, parts, k=0.2):
        if not parts or k <= 0:
            raise ValueError("smooth union needs parts and k > 0")
        self.parts = list(parts)
        self.k = float(k)

    def _fold(self, p, with_grad):
        d = self.parts[0].distance(p)
        g = self.parts[0].gradient(p) if with_grad else None
        for part in self.parts[1:]:
            b = part.distance(p)
            h = np.clip(0.5 + 0.5 * (b - d) / self.k, 0.0, 1.0)
            new_d = b * (1 - h) + d * h - self.k * h * (1 - h)
            if with_grad:
                # d(smin)/da = h, d(smin)/db = 1 - h
                g = h[..., None] * g + (1 - h)[..., None] * part.gradient(p)
            d = new_d
        return d, g

    def distance(self, p):
        return self._fold(p, False)[0]

    def gradient(self, p):
        return self._fold(p, True)[1]


def make_shape(name: str) -> SDF:
    if name == "sphere":
        return Sphere(0.6)
    if name == "torus":
        tilt = np.array([[1, 0, 0], [0, np.cos(0.6), -np.sin(0.6)], [0, np.sin(0.6), np.cos(0.6)]])
        return Torus(0.55, 0.22, tilt)
    if name == "blend":
        return SmoothUnion([Sphere(0.45), Sphere(0.28, (0.42, 0.1, 0.2)), Sphere(0.25, (-0.25, -0.35, -0.25))], k=0.15)
    raise ValueError(f"unknown shape {name!r}; expected sphere, torus or blend")


def sphere_trace(sdf: SDF, origins, directions, t_near, t_far, max_steps=512, tol=1e-7):
    """March each ray to the first zero of ``sdf``.  Returns (t, hit)."""
    t = np.array(t_near, dtype=np.float64, copy=True)
    active = np.ones(t.shape, dtype=bool)
    hit = np.zeros(t.shape, dtype=bool)
    for _ in range(max_steps):
        if not active.any():
            break
        idx = np.nonzero(active)[0]
        p = origins[idx] + t[idx, None] * directions[idx]
        d = sdf.distance(p)
        done = d < tol
        hit[idx[done]] = True
        t[idx] += np.where(done, 0.0, d)
        escaped = t[idx] > t_far[idx]
        active[idx[done | escaped]] = False
    # polish hits with Newton steps along the ray
    idx = np.nonzero(hit)[0]
    for _ in range(3):
        p = origins[idx] + t[idx, None] * directions[idx]
        slope = np.sum(sdf.gradient(p) * directions[idx], axis=-1)
        step = np.where(np.abs(slope) > 1e-3, sdf.distance(p) / np.where(slope == 0, 1, slope), 0.0)
        t[idx] -= step
    return t, hit
