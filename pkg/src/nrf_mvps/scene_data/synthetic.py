"""Synthetic MVPS scenes rendered from analytic signed-distance shapes.

Each view/light image follows

    I = e * (albedo / pi + ks * max(n.h, 0)^p) * max(n.l, 0) + noise

on object pixels and 0 on the background.  Only attached shadows are
modelled unless ``cast_shadows`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import CameraIntrinsics, look_at, pixel_directions_cam, ray_box_bounds
from ..surface_extraction import DensityGrid, lattice_points, marching_cubes
from .bundle import DepthMap, GroundTruth, LightSource, NormalMap, SceneBundle, ViewRecord
from .shapes import make_shape, sphere_trace


@dataclass
class SyntheticSceneConfig:
    shape: str = "sphere"
    albedo: float | tuple = 0.8
    texture: str | None = None            # None, "checker" or "stripes"
    specular: tuple | None = None         # (strength, exponent) Blinn-Phong
    n_views: int = 8
    n_lights: int = 16
    size: int = 64
    light_polar_deg: tuple = (25.0, 45.0)  # light rings, angle from the camera axis
    light_intensity: float = 3.0
    intensity_jitter: float = 0.0
    lights: list | None = None            # explicit [lx, ly, lz, e] rows in camera frame
    camera_distance: float = 3.5
    view_elevation_deg: float = 25.0
    half_extent: float = 1.0              # half-width covered at the origin's depth
    bounds: float = 1.0
    noise_std: float = 0.0
    cast_shadows: bool = False
    mesh_res: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.lights is None and self.n_lights < 3:
            raise ValueError("at least 3 lights are needed for photometric stereo")
        if self.n_views < 1 or self.size < 2:
            raise ValueError("need n_views >= 1 and size >= 2")


def ring_lights(n, polar_deg=(25.0, 45.0), intensity=1.0, jitter=0.0, rng=None) -> list[LightSource]:
    """Lights on concentric rings around the optical axis, in camera frame (towards the camera is -z)."""
    polar = np.radians(np.atleast_1d(polar_deg))
    lights = []
    for i in range(n):
        ring = i % len(polar)
        theta = polar[ring]
        psi = 2 * np.pi * i / n + ring * np.pi / n
        d = np.array([np.sin(theta) * np.cos(psi), np.sin(theta) * np.sin(psi), -np.cos(theta)])
        e = intensity * (1.0 + (rng.uniform(-jitter, jitter) if jitter else 0.0))
        lights.append(LightSource(d / np.linalg.norm(d), e))
    return lights


def camera_positions(n_views, distance, elevation_deg):
    """Views on a ring around +z with alternating elevation."""
    pos = []
    for k in range(n_views):
        az = 2 * np.pi * k / n_views
        el = np.radians(elevation_deg) * (1 if k % 2 == 0 else -1)
        pos.append(distance * np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]))
    return pos


def _albedo(cfg: SyntheticSceneConfig, points) -> np.ndarray:
    base = np.broadcast_to(np.asarray(cfg.albedo, dtype=np.float64), (3,))
    a = np.broadcast_to(base, points.shape[:-1] + (3,)).copy()
    if cfg.texture == "checker":
        c = np.floor(points * 4.0).sum(axis=-1) % 2
        a *= (0.6 + 0.4 * c)[..., None]
    elif cfg.texture == "stripes":
        a *= (0.75 + 0.25 * np.sin(8.0 * points[..., 2]))[..., None]
    elif cfg.texture is not None:
        raise ValueError(f"unknown texture {cfg.texture!r}")
    return a


def shade(normals, lights_dir, lights_e, view_dirs, albedo, specular=None):
    """Forward image model for unit camera-frame normals (P, 3).  Returns (N_p, P, 3)."""
    ndotl = normals @ lights_dir.T                                  # (P, N_p)
    brdf = albedo[:, None, :] / np.pi                               # (P, 1, 3)
    if specular is not None:
        ks, p = specular
        h = lights_dir[None, :, :] + view_dirs[:, None, :]
        h /= np.linalg.norm(h, axis=-1, keepdims=True)
        ndoth = np.maximum(np.einsum("pc,plc->pl", normals, h), 0.0)
        brdf = brdf + (ks * ndoth ** p)[..., None]
    img = lights_e[None, :, None] * brdf * np.maximum(ndotl, 0.0)[..., None]
    return np.transpose(img, (1, 0, 2))


def generate_synthetic_scene(cfg: SyntheticSceneConfig) -> SceneBundle:
    rng = np.random.default_rng(cfg.seed)
    sdf = make_shape(cfg.shape)
    bmin, bmax = -cfg.bounds * np.ones(3), cfg.bounds * np.ones(3)
    f = cfg.size / 2 * cfg.camera_distance / cfg.half_extent
    intr = CameraIntrinsics(f, f, cfg.size / 2, cfg.size / 2, cfg.size, cfg.size)
    rows, cols = np.indices((cfg.size, cfg.size)).reshape(2, -1)
    d_cam = pixel_directions_cam(intr, rows, cols)

    views, gt_normals, gt_depths = [], [], []
    for v, eye in enumerate(camera_positions(cfg.n_views, cfg.camera_distance, cfg.view_elevation_deg)):
        pose = look_at(eye)
        if cfg.lights is not None:
            lights = [LightSource(np.asarray(l[:3], dtype=np.float64), l[3] if len(l) > 3 else 1.0)
                      for l in cfg.lights]
        else:
            lights = ring_lights(cfg.n_lights, cfg.light_polar_deg, cfg.light_intensity, cfg.intensity_jitter, rng)
        L = np.array([l.direction for l in lights])
        E = np.array([l.intensity for l in lights])

        d = d_cam @ pose.rotation.T
        o = np.broadcast_to(pose.translation, d.shape)
        tn, tf = ray_box_bounds(o, d, bmin, bmax)
        t, hit = sphere_trace(sdf, o, d, tn, tf)
        pts = o[hit] + t[hit, None] * d[hit]
        n_world = sdf.normal(pts)
        n_cam = n_world @ pose.rotation
        n_cam /= np.linalg.norm(n_cam, axis=-1, keepdims=True)

        shaded = shade(n_cam, L, E, -d_cam[hit], _albedo(cfg, pts), cfg.specular)
        if cfg.cast_shadows:
            for i, l in enumerate(L):
                l_world = pose.rotation @ l
                start = pts + 2e-3 * n_world
                far = np.full(len(pts), 2 * np.linalg.norm(bmax - bmin))
                _, blocked = sphere_trace(sdf, start, np.broadcast_to(l_world, pts.shape), np.zeros(len(pts)), far)
                shaded[i][blocked] = 0.0
        if cfg.noise_std > 0:
            shaded = np.maximum(shaded + rng.normal(0.0, cfg.noise_std, shaded.shape), 0.0)

        H = W = cfg.size
        images = np.zeros((len(lights), H * W, 3))
        images[:, hit] = shaded
        mask = hit.reshape(H, W)
        normals = np.zeros((H * W, 3))
        normals[hit] = n_cam
        depth = np.full(H * W, np.inf)
        depth[hit] = t[hit] * d_cam[hit, 2]
        views.append(ViewRecord(intr, pose, lights, images.reshape(-1, H, W, 3), mask))
        gt_normals.append(NormalMap(normals.reshape(H, W, 3), mask))
        gt_depths.append(DepthMap(depth.reshape(H, W)))

    pts = lattice_points(bmin, bmax, cfg.mesh_res)
    mesh = marching_cubes(DensityGrid(-sdf.distance(pts), bmin, bmax), 0.0)
    gt = GroundTruth(gt_normals, gt_depths, mesh)
    return SceneBundle(views, bmin, bmax, gt, name=f"synthetic-{cfg.shape}")
