"""Dense density sampling and marching-cubes isosurface extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import io

DEFAULT_ISO = 10.0
DEFAULT_RES = 512
ISO_SWEEP = (1.0, 5.0, 10.0, 20.0, 50.0, 100.0)

# Cube corner offsets and edges in the classic Lorensen & Cline numbering.
CORNERS = np.array(
    [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
)
EDGES = [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4),
         (0, 4), (1, 5), (2, 6), (3, 7)]
FACES = [(0, 1, 2, 3), (4, 5, 6, 7), (0, 1, 5, 4), (3, 2, 6, 7), (0, 3, 7, 4), (1, 2, 6, 5)]


@dataclass
class DensityGrid:
    """``values[i, j, k]`` is the density at ``bbox_min + (ijk + 0.5) * step``."""

    values: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        self.bbox_min = np.asarray(self.bbox_min, dtype=np.float64)
        self.bbox_max = np.asarray(self.bbox_max, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ValueError("density grid needs at least 2 samples per axis")
        if np.any(self.bbox_max <= self.bbox_min):
            raise ValueError("degenerate bounding box")

    @property
    def res(self) -> tuple[int, int, int]:
        return tuple(self.values.shape)

    @property
    def step(self) -> np.ndarray:
        return (self.bbox_max - self.bbox_min) / np.array(self.res)

    def points(self) -> np.ndarray:
        return lattice_points(self.bbox_min, self.bbox_max, self.res)

    def save(self, path) -> None:
        """Raw little-endian float32 values plus a JSON sidecar header."""
        header = {"res": list(self.res), "bbox_min": self.bbox_min.tolist(),
                  "bbox_max": self.bbox_max.tolist(), "dtype": "<f4", "order": "C"}
        with open(str(path) + ".json", "w") as f:
            json.dump(header, f, indent=2, sort_keys=True)
        np.ascontiguousarray(self.values, dtype="<f4").tofile(path)

    @classmethod
    def load(cls, path) -> "DensityGrid":
        with open(str(path) + ".json") as f:
            header = json.load(f)
        values = np.fromfile(path, dtype=header["dtype"]).reshape(header["res"])
        return cls(values, header["bbox_min"], header["bbox_max"])


@dataclass
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)):
            raise ValueError("triangle index out of range")

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def save(self, path) -> None:
        io.write_ply(path, self.vertices, self.triangles, self.normals)

    @classmethod
    def load(cls, path) -> "Mesh":
        v, f, n = io.read_ply(path)
        return cls(v, f, n)


def lattice_points(bbox_min, bbox_max, res) -> np.ndarray:
    """Cell-centre lattice, shape (rx, ry, rz, 3)."""
    bbox_min = np.asarray(bbox_min, dtype=np.float64)
    bbox_max = np.asarray(bbox_max, dtype=np.float64)
    res = np.broadcast_to(np.asarray(res), (3,))
    step = (bbox_max - bbox_min) / res
    axes = [bbox_min[a] + (np.arange(res[a]) + 0.5) * step[a] for a in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def sample_density_grid(params, bbox_min, bbox_max, res=DEFAULT_RES, chunk=1 << 16) -> DensityGrid:
    """Evaluate the field's density on the cell-centre lattice of the box."""
    from .neural_field import eval_density

    res = tuple(int(r) for r in np.broadcast_to(np.asarray(res), (3,)))
    if min(res) < 2:
        raise ValueError("res must be >= 2")
    pts = lattice_points(bbox_min, bbox_max, res).reshape(-1, 3)
    out = np.empty(len(pts), dtype=np.float32)
    for s in range(0, len(pts), chunk):
        out[s:s + chunk] = eval_density(params, pts[s:s + chunk])
    return DensityGrid(out.reshape(res), bbox_min, bbox_max)


def _case_triangles(case: int) -> list[tuple[int, int, int]]:
    inside = [(case >> c) & 1 for c in range(8)]
    edge_id = {frozenset(e): k for k, e in enumerate(EDGES)}
    segments = []
    for face in FACES:
        cyc = list(face) + [face[0]]
        crossing = [edge_id[frozenset((cyc[k], cyc[k + 1]))]
                    for k in range(4) if inside[cyc[k]] != inside[cyc[k + 1]]]
        if len(crossing) == 2:
            segments.append(tuple(crossing))
        elif len(crossing) == 4:
            # ambiguous face: cut each inside corner off on its own
            for k in range(4):
                c = face[k]
                if inside[c]:
                    prev_c, next_c = face[k - 1], face[(k + 1) % 4]
                    segments.append((edge_id[frozenset((prev_c, c))], edge_id[frozenset((c, next_c))]))
    adjacency: dict[int, list[int]] = {}
    for a, b in segments:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)
    mid = np.array([(CORNERS[a] + CORNERS[b]) / 2.0 for a, b in EDGES])
    triangles = []
    visited = set()
    for start in sorted(adjacency):
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        prev, cur = None, start
        while True:
            nxt = [e for e in adjacency[cur] if e != prev]
            nxt = nxt[0] if nxt else adjacency[cur][0]
            if nxt == start:
                break
            loop.append(nxt)
            visited.add(nxt)
            prev, cur = cur, nxt
        pts = mid[loop]
        normal = np.zeros(3)
        for k in range(len(loop)):
            p, q = pts[k], pts[(k + 1) % len(loop)]
            normal += np.cross(p, q)
        ins = np.mean([CORNERS[a] if inside[a] else CORNERS[b] for a, b in (EDGES[e] for e in loop)], axis=0)
        outs = np.mean([CORNERS[b] if inside[a] else CORNERS[a] for a, b in (EDGES[e] for e in loop)], axis=0)
        if np.dot(normal, outs - ins) < 0:
            loop = loop[::-1]
        for k in range(1, len(loop) - 1):
            triangles.append((loop[0], loop[k], loop[k + 1]))
    return triangles


@lru_cache(maxsize=1)
def triangle_table() -> np.ndarray:
    """(256, 16, 3) edge indices, padded with -1; triangles face away from inside corners."""
    table = -np.ones((256, 16, 3), dtype=np.int64)
    for case in range(256):
        tris = _case_triangles(case)
        if tris:
            table[case, :len(tris)] = tris
    return table


def marching_cubes(grid: DensityGrid, iso: float = DEFAULT_ISO) -> Mesh:
    """Extract the ``values == iso`` surface; corners with value >= iso count as inside."""
    if not np.isfinite(iso):
        raise ValueError("iso must be finite")
    V = np.asarray(grid.values, dtype=np.float64)
    nx, ny, nz = V.shape
    inside = V >= iso
    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for c, (dx, dy, dz) in enumerate(CORNERS):
        case |= inside[dx:nx - 1 + dx, dy:ny - 1 + dy, dz:nz - 1 + dz].astype(np.int64) << c
    active = np.nonzero((case != 0) & (case != 255))
    if len(active[0]) == 0:
        return Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    cell = np.stack(active, axis=1)
    table = triangle_table()
    tris_local = table[case[active]]
    valid = tris_local[:, :, 0] >= 0
    cell_idx, slot = np.nonzero(valid)
    local_edges = tris_local[cell_idx, slot]

    n_pts = nx * ny * nz
    edge_start = np.array([np.minimum(CORNERS[a], CORNERS[b]) for a, b in EDGES])
    edge_axis = np.array([int(np.argmax(np.abs(CORNERS[b] - CORNERS[a]))) for a, b in EDGES])
    start = cell[cell_idx][:, None, :] + edge_start[local_edges]
    flat = (start[..., 0] * ny + start[..., 1]) * nz + start[..., 2]
    global_edge = edge_axis[local_edges] * n_pts + flat

    uniq, tri = np.unique(global_edge, return_inverse=True)
    tri = tri.reshape(-1, 3)
    axis = uniq // n_pts
    p0 = np.stack(np.unravel_index(uniq % n_pts, (nx, ny, nz)), axis=1)
    p1 = p0 + np.eye(3, dtype=np.int64)[axis]
    v0 = V[p0[:, 0], p0[:, 1], p0[:, 2]]
    v1 = V[p1[:, 0], p1[:, 1], p1[:, 2]]
    denom = v1 - v0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom != 0, (iso - v0) / np.where(denom != 0, denom, 1.0), 0.5)
    pos_idx = p0 + t[:, None] * (p1 - p0)
    vertices = grid.bbox_min + (pos_idx + 0.5) * grid.step

    a, b, c = vertices[tri[:, 0]], vertices[tri[:, 1]], vertices[tri[:, 2]]
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    keep = area > 1e-12 * float(np.min(grid.step)) ** 2
    tri = tri[keep]
    used, remap = np.unique(tri, return_inverse=True)
    mesh = Mesh(vertices[used], remap.reshape(-1, 3))
    mesh.normals = vertex_normals(mesh)
    return mesh


def vertex_normals(mesh: Mesh) -> np.ndarray:
    v, f = mesh.vertices, mesh.triangles
    fn = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    acc = np.zeros_like(v)
    for k in range(3):
        np.add.at(acc, f[:, k], fn)
    n = np.linalg.norm(acc, axis=1, keepdims=True)
    return np.divide(acc, n, out=np.zeros_like(acc), where=n > 0)


def iso_sweep(grid: DensityGrid, isos=ISO_SWEEP) -> dict[float, Mesh]:
    return {float(iso): marching_cubes(grid, iso) for iso in isos}
