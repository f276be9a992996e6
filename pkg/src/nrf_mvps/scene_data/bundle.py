"""Scene bundle types and the on-disk bundle directory format.

Layout::

    manifest.json
    view_000/img_000.pfm ...   linear RGB, little-endian PFM
    view_000/mask.png          8-bit, 0/255
    gt/normal_000.pfm          camera-frame normals (optional)
    gt/depth_000.pfm           camera-frame z depth, +inf off the object (optional)
    gt/mesh.ply                reference mesh, binary little-endian (optional)

Poses are camera-to-world, written as 12 row-major numbers of [R | t].
Lights are ``[lx, ly, lz, e]`` with the direction in the view's camera
frame, pointing from the surface towards the light.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import io
from ..geometry import CameraIntrinsics, Pose, pixel_rays, ray_box_bounds
from ..surface_extraction import Mesh

FORMAT_VERSION = 1


class BundleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LightSource:
    direction: np.ndarray
    intensity: float = 1.0

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64).reshape(3)
        if abs(float(d @ d) - 1.0) > 1e-9:
            raise BundleError(f"non-unit light direction {d.tolist()}")
        if not self.intensity > 0:
            raise BundleError(f"light intensity must be positive, got {self.intensity}")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "intensity", float(self.intensity))


def light_arrays(lights) -> tuple[np.ndarray, np.ndarray]:
    """(N, 3) directions and (N,) intensities."""
    return (np.array([l.direction for l in lights]).reshape(-1, 3),
            np.array([l.intensity for l in lights], dtype=np.float64))


@dataclass
class NormalMap:
    """Per-pixel unit normals in the camera frame; ``valid`` marks trustworthy pixels."""

    normals: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.normals.shape != self.valid.shape + (3,):
            raise ValueError("normal map and validity mask shapes disagree")

    def check_unit(self, tol=1e-6):
        n = np.linalg.norm(self.normals[self.valid], axis=-1)
        if n.size and np.max(np.abs(n - 1)) > tol:
            raise ValueError("valid normals must be unit length")

    def save(self, path):
        io.write_pfm(path, np.where(self.valid[..., None], self.normals, 0.0))

    @classmethod
    def load(cls, path):
        n = io.read_pfm(path).astype(np.float64)
        norm = np.linalg.norm(n, axis=-1)
        valid = norm > 0.5
        n[valid] /= norm[valid, None]
        return cls(n, valid)


@dataclass
class DepthMap:
    """Camera-frame z depth; non-finite outside the object."""

    depth: np.ndarray

    @property
    def valid(self):
        return np.isfinite(self.depth)

    def save(self, path):
        io.write_pfm(path, self.depth)

    @classmethod
    def load(cls, path):
        return cls(io.read_pfm(path).astype(np.float64))


@dataclass
class ViewRecord:
    intrinsics: CameraIntrinsics
    pose: Pose
    lights: list[LightSource]
    images: np.ndarray          # (N_p, H, W, 3) float32, linear
    mask: np.ndarray            # (H, W) bool

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.images.ndim != 4 or self.images.shape[-1] != 3:
            raise BundleError(f"images must be (N_p, H, W, 3), got {self.images.shape}")
        if len(self.lights) < 1 or len(self.lights) != len(self.images):
            raise BundleError(f"{len(self.images)} images but {len(self.lights)} lights")
        if self.images.shape[1:3] != self.mask.shape:
            raise BundleError(f"mask shape {self.mask.shape} does not match images {self.images.shape[1:3]}")
        if self.mask.shape != (self.intrinsics.height, self.intrinsics.width):
            raise BundleError("image size disagrees with intrinsics")

    @property
    def shape(self):
        return self.mask.shape

    def gray_stack(self) -> np.ndarray:
        """(N_p, H, W) channel-mean intensities, the scalar observations used by PS."""
        return self.images.mean(axis=-1, dtype=np.float64)


@dataclass
class GroundTruth:
    normals: list[NormalMap] | None = None
    depths: list[DepthMap] | None = None
    mesh: Mesh | None = None


@dataclass
class SceneBundle:
    views: list[ViewRecord]
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    ground_truth: GroundTruth | None = None
    name: str = "scene"
    units: str = "normalized"
    scale: float = 1.0

    def __post_init__(self):
        self.bbox_min = np.asarray(self.bbox_min, dtype=np.float64)
        self.bbox_max = np.asarray(self.bbox_max, dtype=np.float64)
        if np.any(self.bbox_max <= self.bbox_min):
            raise BundleError("bounds are degenerate")
        if not self.views:
            raise BundleError("bundle has no views")

    def view_rays(self, v: int, rows=None, cols=None):
        """(origins, directions, t_near, t_far) for pixels of view ``v`` (all pixels by default)."""
        view = self.views[v]
        if rows is None:
            rows, cols = np.indices(view.shape).reshape(2, -1)
        o, d = pixel_rays(view.intrinsics, view.pose, rows, cols)
        tn, tf = ray_box_bounds(o, d, self.bbox_min, self.bbox_max)
        return o, d, tn, tf


def _fmt_path(root: Path, p: Path) -> str:
    return p.relative_to(root).as_posix()


def save_bundle(bundle: SceneBundle, path) -> None:
    root = io.ensure_dir(path)
    views = []
    for v, view in enumerate(bundle.views):
        vdir = io.ensure_dir(root / f"view_{v:03d}")
        images = []
        for i, img in enumerate(view.images):
            p = vdir / f"img_{i:03d}.pfm"
            io.write_pfm(p, img)
            images.append(_fmt_path(root, p))
        io.write_mask_png(vdir / "mask.png", view.mask)
        K = view.intrinsics
        views.append({
            "intrinsics": {"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy, "width": K.width, "height": K.height},
            "pose_c2w": view.pose.as_row_major(),
            "lights": [[*l.direction.tolist(), l.intensity] for l in view.lights],
            "images": images,
            "mask": f"view_{v:03d}/mask.png",
        })
    gt_entry = None
    gt = bundle.ground_truth
    if gt is not None:
        gdir = io.ensure_dir(root / "gt")
        gt_entry = {}
        if gt.normals is not None:
            gt_entry["normals"] = []
            for v, nm in enumerate(gt.normals):
                nm.save(gdir / f"normal_{v:03d}.pfm")
                gt_entry["normals"].append(f"gt/normal_{v:03d}.pfm")
        if gt.depths is not None:
            gt_entry["depths"] = []
            for v, dm in enumerate(gt.depths):
                dm.save(gdir / f"depth_{v:03d}.pfm")
                gt_entry["depths"].append(f"gt/depth_{v:03d}.pfm")
        if gt.mesh is not None:
            gt.mesh.save(gdir / "mesh.ply")
            gt_entry["mesh"] = "gt/mesh.ply"
    manifest = {
        "format_version": FORMAT_VERSION,
        "name": bundle.name,
        "units": bundle.units,
        "scale": bundle.scale,
        "bounds": {"min": bundle.bbox_min.tolist(), "max": bundle.bbox_max.tolist()},
        "pose_convention": "camera_to_world",
        "camera_frame": "x right, y down, z forward",
        "views": views,
        "ground_truth": gt_entry,
    }
    with open(root / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def load_bundle(path) -> SceneBundle:
    root = Path(path)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise BundleError(f"{root}: missing manifest.json")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as e:
        raise BundleError(f"{mpath}: invalid JSON ({e})") from e

    def need(obj, key, where):
        if key not in obj:
            raise BundleError(f"{mpath}: missing field {where}.{key}")
        return obj[key]

    if manifest.get("format_version", FORMAT_VERSION) != FORMAT_VERSION:
        raise BundleError(f"{mpath}: unsupported format_version {manifest['format_version']}")
    views = []
    for v, entry in enumerate(need(manifest, "views", "manifest")):
        where = f"views[{v}]"
        K = need(entry, "intrinsics", where)
        try:
            intr = CameraIntrinsics(float(K["fx"]), float(K["fy"]), float(K["cx"]), float(K["cy"]),
                                    int(K["width"]), int(K["height"]))
            pose = Pose.from_row_major(need(entry, "pose_c2w", where))
        except (KeyError, ValueError) as e:
            raise BundleError(f"{mpath}: {where}: {e}") from e
        lights = []
        for i, l in enumerate(need(entry, "lights", where)):
            try:
                lights.append(LightSource(np.array(l[:3], dtype=np.float64), float(l[3])))
            except BundleError as e:
                raise BundleError(f"{mpath}: {where}.lights[{i}]: {e}") from e
        images = []
        for rel in need(entry, "images", where):
            p = root / rel
            if not p.is_file():
                raise BundleError(f"{p}: image file missing")
            img = io.read_pfm(p)
            if img.ndim != 3:
                raise BundleError(f"{p}: expected an RGB PFM")
            if img.shape[:2] != (intr.height, intr.width):
                raise BundleError(f"{p}: dimension mismatch {img.shape[:2]} vs {(intr.height, intr.width)}")
            images.append(img)
        mask_path = root / need(entry, "mask", where)
        if not mask_path.is_file():
            raise BundleError(f"{mask_path}: mask file missing")
        mask = io.read_mask_png(mask_path)
        if mask.shape != (intr.height, intr.width):
            raise BundleError(f"{mask_path}: dimension mismatch {mask.shape} vs {(intr.height, intr.width)}")
        try:
            views.append(ViewRecord(intr, pose, lights, np.stack(images), mask))
        except BundleError as e:
            raise BundleError(f"{mpath}: {where}: {e}") from e

    gt = None
    g = manifest.get("ground_truth")
    if g:
        gt = GroundTruth()
        if "normals" in g:
            gt.normals = [NormalMap.load(root / p) for p in g["normals"]]
        if "depths" in g:
            gt.depths = [DepthMap.load(root / p) for p in g["depths"]]
        if "mesh" in g:
            gt.mesh = Mesh.load(root / g["mesh"])
    bounds = need(manifest, "bounds", "manifest")
    return SceneBundle(views, bounds["min"], bounds["max"], gt, manifest.get("name", "scene"),
                       manifest.get("units", "normalized"), float(manifest.get("scale", 1.0)))
