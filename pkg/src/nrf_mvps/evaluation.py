"""Scoring: full-view rendering, PSNR, Chamfer-L1, projected depth and normal error."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import pixel_directions_cam
from .neural_field import FieldParams
from .parallel import deterministic_blas, ordered_map
from .photometric_stereo import rescale_to_unit_range
from .scene_data import DepthMap, NormalMap, SceneBundle
from .surface_extraction import Mesh
from .trainer import chunk_rng, conditioning_normals
from .volume_renderer import RayBatch, RenderConfig, render_rays

PSNR_CAP = 99.0
DEFAULT_CHAMFER_POINTS = 100_000


@dataclass
class RenderedView:
    image: np.ndarray      # (H, W, 3)
    depth: np.ndarray      # camera z from expected ray distance, (H, W)
    opacity: np.ndarray    # (H, W)


def view_ray_batch(bundle: SceneBundle, v: int, normal_map: NormalMap | None, background: str = "zero") -> RayBatch:
    o, d, tn, tf = bundle.view_rays(v)
    return RayBatch(o, d, tn, tf, conditioning_normals(bundle, v, normal_map, d, background))


def render_view(coarse: FieldParams, fine: FieldParams, bundle: SceneBundle, v: int, normal_map: NormalMap | None,
                cfg: RenderConfig = RenderConfig(perturb=False), seed: int = 0, chunk: int = 1024,
                threads: int | None = None, background: str = "zero") -> RenderedView:
    """Render every pixel of view ``v``; chunk random streams are keyed by (seed, view, chunk).

    ``background`` must match the conditioning mode used in training.
    """
    view = bundle.views[v]
    H, W = view.shape
    rays = view_ray_batch(bundle, v, normal_map, background)
    starts = list(range(0, len(rays), chunk))

    def work(k):
        sl = slice(starts[k], starts[k] + chunk)
        res = render_rays(coarse, fine, rays.subset(sl), cfg, chunk_rng(seed, v, k))
        return res.color_fine, res.fine.depth, res.fine.opacity

    with deterministic_blas():
        parts = ordered_map(work, range(len(starts)), threads)
    color = np.concatenate([p[0] for p in parts]).astype(np.float64)
    t_exp = np.concatenate([p[1] for p in parts]).astype(np.float64)
    acc = np.concatenate([p[2] for p in parts]).astype(np.float64)
    rows, cols = np.indices((H, W)).reshape(2, -1)
    dz = pixel_directions_cam(view.intrinsics, rows, cols)[:, 2]
    return RenderedView(color.reshape(H, W, 3), (t_exp * dz).reshape(H, W), acc.reshape(H, W))


def psnr(img_a, img_b, peak: float = 1.0) -> float:
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(peak ** 2 / mse))


def sample_surface(mesh: Mesh, n: int, rng) -> np.ndarray:
    """Uniform-by-area points on the mesh surface."""
    if mesh.is_empty:
        raise ValueError("cannot sample an empty mesh")
    areas = mesh.triangle_areas()
    cdf = np.cumsum(areas)
    tri = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    tri = np.minimum(tri, len(areas) - 1)
    u, v = rng.random(n), rng.random(n)
    su = np.sqrt(u)
    b0, b1, b2 = 1 - su, su * (1 - v), su * v
    f = mesh.triangles[tri]
    V = mesh.vertices
    return b0[:, None] * V[f[:, 0]] + b1[:, None] * V[f[:, 1]] + b2[:, None] * V[f[:, 2]]


def chamfer_l1(mesh_a: Mesh, mesh_b: Mesh, n_points: int = DEFAULT_CHAMFER_POINTS, seed: int = 0) -> float:
    """Mean of the two directed mean nearest-neighbour distances between surface samples.

    Both meshes are sampled with an identically seeded stream, so the value
    is symmetric in its arguments.
    """
    if mesh_a.is_empty or mesh_b.is_empty:
        raise ValueError("chamfer distance needs two non-empty meshes")
    pa = sample_surface(mesh_a, n_points, np.random.default_rng(seed))
    pb = sample_surface(mesh_b, n_points, np.random.default_rng(seed))
    d_ab, _ = cKDTree(pb).query(pa, workers=1)
    d_ba, _ = cKDTree(pa).query(pb, workers=1)
    return float(0.5 * (np.mean(d_ab) + np.mean(d_ba)))


def mesh_depth(mesh: Mesh, bundle: SceneBundle, v: int, chunk: int = 64) -> DepthMap:
    """Camera-z depth of the nearest mesh intersection per pixel (Moller-Trumbore)."""
    view = bundle.views[v]
    H, W = view.shape
    o, d, _, _ = bundle.view_rays(v)
    V, F = mesh.vertices, mesh.triangles
    p0 = V[F[:, 0]]
    e1 = V[F[:, 1]] - p0
    e2 = V[F[:, 2]] - p0
    best = np.full(len(d), np.inf)
    for s in range(0, len(d), chunk):
        dd = d[s:s + chunk]
        oo = o[s:s + chunk]
        pvec = np.cross(dd[:, None, :], e2[None])
        det = np.einsum("tc,rtc->rt", e1, pvec)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = oo[:, None, :] - p0[None]
        u = np.einsum("rtc,rtc->rt", tvec, pvec) * inv
        qvec = np.cross(tvec, e1[None])
        w = np.einsum("rc,rtc->rt", dd, qvec) * inv
        t = np.einsum("tc,rtc->rt", e2, qvec) * inv
        hit = ok & (u >= 0) & (w >= 0) & (u + w <= 1) & (t > 1e-9)
        best[s:s + chunk] = np.where(hit, t, np.inf).min(axis=1)
    rows, cols = np.indices((H, W)).reshape(2, -1)
    dz = pixel_directions_cam(view.intrinsics, rows, cols)[:, 2]
    return DepthMap((best * dz).reshape(H, W))


def projected_depth(source, bundle: SceneBundle, v: int, normal_map: NormalMap | None = None,
                    cfg: RenderConfig = RenderConfig(perturb=False), seed: int = 0,
                    background: str = "zero") -> DepthMap:
    """Depth map of view ``v`` from a mesh (ray casting) or a (coarse, fine) field pair (expected depth)."""
    if isinstance(source, Mesh):
        return mesh_depth(source, bundle, v)
    coarse, fine = source
    rv = render_view(coarse, fine, bundle, v, normal_map, cfg, seed, background=background)
    return DepthMap(rv.depth)


def depth_l1(pred, gt, mask) -> float:
    """Mean |pred - gt| after rescaling each map to [-1, 1] over ``mask``."""
    pred = pred.depth if isinstance(pred, DepthMap) else np.asarray(pred, dtype=np.float64)
    gt = gt.depth if isinstance(gt, DepthMap) else np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool) & np.isfinite(pred) & np.isfinite(gt)
    if not mask.any():
        raise ValueError("depth comparison needs a non-empty mask")
    a = rescale_to_unit_range(pred, mask)
    b = rescale_to_unit_range(gt, mask)
    return float(np.mean(np.abs(a[mask] - b[mask])))


def angular_errors(pred: NormalMap, gt: NormalMap) -> np.ndarray:
    if pred.normals.shape != gt.normals.shape:
        raise ValueError("normal maps differ in shape")
    joint = pred.valid & gt.valid
    if not joint.any():
        raise ValueError("no jointly valid pixels")
    dots = np.clip(np.sum(pred.normals[joint] * gt.normals[joint], axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(dots))


def angular_error(pred: NormalMap, gt: NormalMap) -> tuple[float, float]:
    """(mean, median) angular error in degrees over jointly valid pixels."""
    e = angular_errors(pred, gt)
    return float(np.mean(e)), float(np.median(e))


def write_report(path, metrics: dict) -> None:
    with open(path, "w") as f:
        json.dump(metrics, f, indent=2, sort_keys=True)
        f.write("\n")


def write_table(path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("empty table")
    keys = list(rows[0])
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
