"""Per-view normal estimation from light-varying image stacks.

All normals and light directions here live in the view's camera frame
(x right, y down, z forward), so surfaces facing the camera have n_z < 0.
Observation maps are indexed ``grid[ix, iy]`` with ix from l_x and iy from
l_y.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import rotation_about_axis
from .scene_data import LightSource, NormalMap, DepthMap, SceneBundle, light_arrays

log = logging.getLogger(__name__)

DEFAULT_MAP_SIZE = 32
DEFAULT_ROTATIONS = 10


class DegenerateLightsError(ValueError):
    pass


@dataclass
class ObservationMap:
    grid: np.ndarray

    @property
    def w(self) -> int:
        return self.grid.shape[0]


def _as_arrays(lights):
    if isinstance(lights, tuple) and len(lights) == 2 and isinstance(lights[0], np.ndarray):
        return lights
    return light_arrays(lights)


def map_cells(directions, w: int) -> tuple[np.ndarray, np.ndarray]:
    """zeta(w * (l + 1) / 2) with zeta = clamp(floor(.), 0, w - 1), for x and y."""
    cells = np.floor(w * (np.asarray(directions)[:, :2] + 1.0) / 2.0).astype(np.int64)
    cells = np.clip(cells, 0, w - 1)
    return cells[:, 0], cells[:, 1]


def observation_maps(intensities, directions, energies, w: int = DEFAULT_MAP_SIZE) -> np.ndarray:
    """Batched observation maps: intensities (P, N_p) -> (P, w, w)."""
    I = np.atleast_2d(np.asarray(intensities, dtype=np.float64))
    if np.any(I < 0):
        raise ValueError("negative intensity in observation map input")
    ratio = I / np.asarray(energies, dtype=np.float64)[None, :]
    peak = ratio.max(axis=1, keepdims=True)
    ratio = np.divide(ratio, peak, out=np.zeros_like(ratio), where=peak > 0)
    ix, iy = map_cells(directions, w)
    flat = np.zeros((I.shape[0], w * w))
    cell = ix * w + iy
    for i in range(I.shape[1]):
        # collisions keep the larger value
        np.maximum(flat[:, cell[i]], ratio[:, i], out=flat[:, cell[i]])
    return flat.reshape(-1, w, w)


def build_observation_map(intensities, lights, w: int = DEFAULT_MAP_SIZE) -> ObservationMap:
    L, e = _as_arrays(lights)
    if len(L) < 1 or len(L) != len(np.atleast_1d(intensities)):
        raise ValueError("need one intensity per light (and at least one light)")
    return ObservationMap(observation_maps(np.atleast_1d(intensities)[None], L, e, w)[0])


def _lighting_matrix(directions, energies) -> np.ndarray:
    M = np.asarray(energies, dtype=np.float64)[:, None] * np.asarray(directions, dtype=np.float64)
    if M.shape[0] < 3 or np.linalg.matrix_rank(M, tol=1e-10) < 3:
        raise DegenerateLightsError("degenerate light configuration")
    return M


def woodham_batch(intensities, directions, energies):
    """Least-squares Lambertian inversion for many pixels sharing one light set.

    Returns (normals (P,3), albedo (P,), ok (P,)).
    """
    M = _lighting_matrix(directions, energies)
    g = np.atleast_2d(intensities) @ np.linalg.pinv(M).T
    norm = np.linalg.norm(g, axis=1)
    ok = norm > 1e-12
    n = np.divide(g, norm[:, None], out=np.zeros_like(g), where=ok[:, None])
    return n, norm * np.pi, ok


def woodham_solve(intensities, lights):
    """n = normalize(pinv(L) b), albedo = |pinv(L) b| * pi, with rows of L = e_i l_i."""
    L, e = _as_arrays(lights)
    I = np.asarray(intensities, dtype=np.float64)
    if len(I) != len(L):
        raise ValueError("need one intensity per light")
    n, albedo, ok = woodham_batch(I[None], L, e)
    if not ok[0]:
        raise DegenerateLightsError("all observations are zero")
    return n[0], float(albedo[0])


def _n_keep(n_lights: int, trim_fraction: float) -> int:
    if not 0 <= trim_fraction < 1:
        raise ValueError("trim_fraction must be in [0, 1)")
    return n_lights - int(np.floor(trim_fraction * n_lights + 1e-9))


def trimmed_batch(intensities, directions, energies, trim_fraction=0.25):
    """Per pixel, drop the darkest ``trim_fraction`` of observations (by I/e) then solve."""
    I = np.atleast_2d(np.asarray(intensities, dtype=np.float64))
    L = np.asarray(directions, dtype=np.float64)
    e = np.asarray(energies, dtype=np.float64)
    keep = _n_keep(L.shape[0], trim_fraction)
    if keep < 3:
        raise DegenerateLightsError("degenerate light configuration: fewer than 3 lights after trimming")
    if keep == L.shape[0]:
        return woodham_batch(I, L, e)
    order = np.argsort(-(I / e), axis=1, kind="stable")[:, :keep]
    A = (e[:, None] * L)[order]                             # (P, K, 3)
    b = np.take_along_axis(I, order, axis=1)                # (P, K)
    AtA = np.einsum("pki,pkj->pij", A, A)
    Atb = np.einsum("pki,pk->pi", A, b)
    ok = np.abs(np.linalg.det(AtA)) > 1e-12
    g = np.zeros_like(Atb)
    if ok.any():
        g[ok] = np.linalg.solve(AtA[ok], Atb[ok][..., None])[..., 0]
    norm = np.linalg.norm(g, axis=1)
    ok &= norm > 1e-12
    n = np.divide(g, norm[:, None], out=np.zeros_like(g), where=ok[:, None])
    return n, norm * np.pi, ok


def shadow_trimmed_solve(intensities, lights, trim_fraction=0.25):
    L, e = _as_arrays(lights)
    n, albedo, ok = trimmed_batch(np.asarray(intensities, dtype=np.float64)[None], L, e, trim_fraction)
    if not ok[0]:
        raise DegenerateLightsError("degenerate light configuration for the retained observations")
    return n[0], float(albedo[0])


# ---------------------------------------------------------------------------
# observation-map regressor


@dataclass
class PSTrainConfig:
    epochs: int = 10
    lr: float = 1e-3
    batch: int = 64
    seed: int = 0
    augment_rotations: int = DEFAULT_ROTATIONS
    hidden: int = 256
    map_size: int = DEFAULT_MAP_SIZE
    max_pixels: int | None = None


@dataclass
class PSRegressorParams:
    weights: dict[str, np.ndarray]
    map_size: int = DEFAULT_MAP_SIZE
    seed: int = 0
    epochs: int = 0
    loss_curve: list[float] = field(default_factory=list)

    def predict_maps(self, maps) -> np.ndarray:
        z, _ = _mlp_forward(self.weights, np.asarray(maps, dtype=np.float32).reshape(len(maps), -1))
        n = z / np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-12)
        return n.astype(np.float64)

    def __call__(self, intensities, directions, energies) -> np.ndarray:
        return self.predict_maps(observation_maps(intensities, directions, energies, self.map_size))

    def save(self, path):
        np.savez(path, map_size=self.map_size, seed=self.seed, epochs=self.epochs,
                 loss_curve=np.asarray(self.loss_curve), **{f"w_{k}": v for k, v in self.weights.items()})

    @classmethod
    def load(cls, path):
        z = np.load(path)
        weights = {k[2:]: z[k] for k in z.files if k.startswith("w_")}
        return cls(weights, int(z["map_size"]), int(z["seed"]), int(z["epochs"]), z["loss_curve"].tolist())


def _init_regressor(rng, in_dim, hidden) -> dict[str, np.ndarray]:
    w = {}
    for name, (a, b) in {"l1": (in_dim, hidden), "l2": (hidden, hidden), "l3": (hidden, 3)}.items():
        bound = 1.0 / np.sqrt(a)
        w[f"{name}.W"] = rng.uniform(-bound, bound, (a, b)).astype(np.float32)
        w[f"{name}.b"] = rng.uniform(-bound, bound, (b,)).astype(np.float32)
    return w


def _mlp_forward(w, x):
    z1 = x @ w["l1.W"] + w["l1.b"]
    h1 = np.maximum(z1, 0)
    z2 = h1 @ w["l2.W"] + w["l2.b"]
    h2 = np.maximum(z2, 0)
    out = h2 @ w["l3.W"] + w["l3.b"]
    return out, (x, h1, h2)


def _mlp_backward(w, cache, g_out):
    x, h1, h2 = cache
    g = {"l3.W": h2.T @ g_out, "l3.b": g_out.sum(0)}
    g_z2 = (g_out @ w["l3.W"].T) * (h2 > 0)
    g["l2.W"] = h1.T @ g_z2
    g["l2.b"] = g_z2.sum(0)
    g_z1 = (g_z2 @ w["l2.W"].T) * (h1 > 0)
    g["l1.W"] = x.T @ g_z1
    g["l1.b"] = g_z1.sum(0)
    return g


def regressor_loss_and_grad(weights, maps, targets):
    """Mean squared error between unit-normalized predictions and unit targets."""
    z, cache = _mlp_forward(weights, maps)
    norm = np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-12)
    n = z / norm
    diff = n - targets
    B = len(maps)
    loss = float(np.sum(diff ** 2) / B)
    g_n = 2.0 * diff / B
    g_z = (g_n - n * np.sum(g_n * n, axis=1, keepdims=True)) / norm
    return loss, _mlp_backward(weights, cache, g_z.astype(weights["l1.W"].dtype))


def _rotz(angle):
    return rotation_about_axis((0.0, 0.0, 1.0), angle)


def collect_training_pixels(bundle: SceneBundle, views=None, max_pixels=None, rng=None):
    """Stack (intensities, light index group, GT normals) over masked pixels of the given views."""
    if bundle.ground_truth is None or bundle.ground_truth.normals is None:
        raise ValueError("regressor training needs ground-truth normals")
    groups = []
    for v in (range(len(bundle.views)) if views is None else views):
        view = bundle.views[v]
        gt = bundle.ground_truth.normals[v]
        sel = view.mask & gt.valid
        if not sel.any():
            continue
        L, e = light_arrays(view.lights)
        if len(L) < 3:
            raise ValueError(f"view {v} has fewer than 3 lights")
        groups.append((view.gray_stack()[:, sel].T, L, e, gt.normals[sel]))
    if not groups:
        raise ValueError("no valid pixels for regressor training")
    if max_pixels is not None:
        total = sum(len(g[0]) for g in groups)
        if total > max_pixels:
            keep = np.sort(rng.choice(total, size=max_pixels, replace=False))
            out, offset = [], 0
            for I, L, e, n in groups:
                k = keep[(keep >= offset) & (keep < offset + len(I))] - offset
                if len(k):
                    out.append((I[k], L, e, n[k]))
                offset += len(I)
            groups = out
    return groups


def train_ps_regressor(bundle: SceneBundle, cfg: PSTrainConfig = PSTrainConfig(), views=None) -> PSRegressorParams:
    """Fit the map -> normal regressor with Adam on masked pixels' observation maps."""
    from .trainer import AdamConfig, AdamState, adam_step

    rng = np.random.default_rng(cfg.seed)
    groups = collect_training_pixels(bundle, views, cfg.max_pixels, rng)
    weights = _init_regressor(rng, cfg.map_size ** 2, cfg.hidden)
    state = AdamState.zeros_like(weights)
    adam = AdamConfig(lr=cfg.lr)
    n_rot = max(cfg.augment_rotations, 1)

    # sample index -> (group, row)
    index = np.concatenate([np.stack([np.full(len(g[0]), gi), np.arange(len(g[0]))], 1) for gi, g in enumerate(groups)])
    curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(index))
        total = 0.0
        for s in range(0, len(order), cfg.batch):
            batch = index[order[s:s + cfg.batch]]
            angles = 2 * np.pi * rng.integers(0, n_rot, size=len(batch)) / n_rot if cfg.augment_rotations else np.zeros(len(batch))
            maps, targets = [], []
            for gi in np.unique(batch[:, 0]):
                I, L, e, n = groups[gi]
                rows = batch[batch[:, 0] == gi, 1]
                a_sub = angles[batch[:, 0] == gi]
                for a in np.unique(a_sub):
                    r = rows[a_sub == a]
                    R = _rotz(a)
                    maps.append(observation_maps(I[r], L @ R.T, e, cfg.map_size).reshape(len(r), -1))
                    targets.append(n[r] @ R.T)
            maps = np.concatenate(maps).astype(np.float32)
            targets = np.concatenate(targets).astype(np.float32)
            loss, grads = regressor_loss_and_grad(weights, maps, targets)
            weights, state = adam_step(weights, grads, state, adam)
            total += loss * len(batch)
        curve.append(total / len(index))
        log.info("ps regressor epoch %d loss %.6f", epoch, curve[-1])
    return PSRegressorParams(weights, cfg.map_size, cfg.seed, cfg.epochs, curve)


def rotation_averaged_batch(predictor, intensities, directions, energies, K: int = DEFAULT_ROTATIONS):
    """Predict on K rotated copies of the light set, un-rotate, average and renormalize.

    Returns (normals (P,3), fell_back (P,)).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    I = np.atleast_2d(intensities)
    acc = np.zeros((I.shape[0], 3))
    base = None
    for k in range(K):
        R = _rotz(2 * np.pi * k / K)
        n = np.asarray(predictor(I, directions @ R.T, energies), dtype=np.float64)
        if k == 0:
            base = n
        acc += n @ R          # inverse rotation R^T applied to row vectors
    norm = np.linalg.norm(acc, axis=1, keepdims=True)
    fell_back = norm[:, 0] < 1e-12
    out = np.where(fell_back[:, None], base, acc / np.where(fell_back[:, None], 1.0, norm))
    if fell_back.any():
        log.warning("rotation averaging cancelled out on %d pixels; using the unrotated prediction", int(fell_back.sum()))
    return out, fell_back


def rotation_averaged_predict(predictor, intensities, lights, K: int = DEFAULT_ROTATIONS) -> np.ndarray:
    L, e = _as_arrays(lights)
    n, _ = rotation_averaged_batch(predictor, np.asarray(intensities, dtype=np.float64)[None], L, e, K)
    return n[0]


def woodham_predictor(intensities, directions, energies):
    """Exact Lambertian solver with the regressor calling convention."""
    return woodham_batch(intensities, directions, energies)[0]


def estimate_normal_map(bundle: SceneBundle, view_index: int, method: str = "woodham", regressor=None,
                        trim_fraction: float = 0.25, rotations: int = DEFAULT_ROTATIONS) -> NormalMap:
    view = bundle.views[view_index]
    H, W = view.shape
    I = view.gray_stack()[:, view.mask].T
    L, e = light_arrays(view.lights)
    lit = I.max(axis=1) > 0
    normals = np.zeros((H, W, 3))
    valid = np.zeros((H, W), dtype=bool)
    if method == "woodham":
        n, _, ok = woodham_batch(I, L, e)
    elif method == "trimmed":
        n, _, ok = trimmed_batch(I, L, e, trim_fraction)
    elif method == "regressor":
        if regressor is None:
            raise ValueError("regressor method needs trained regressor parameters")
        n, _ = rotation_averaged_batch(regressor, I, L, e, rotations)
        ok = np.isfinite(n).all(axis=1)
    else:
        raise ValueError(f"unknown PS method {method!r}")
    ok = ok & lit
    rows, cols = np.nonzero(view.mask)
    normals[rows[ok], cols[ok]] = n[ok]
    valid[rows[ok], cols[ok]] = True
    return NormalMap(normals, valid)


def write_angular_error_csv(path, pred: NormalMap, gt: NormalMap) -> None:
    joint = pred.valid & gt.valid
    dots = np.clip(np.sum(pred.normals * gt.normals, axis=-1), -1, 1)
    err = np.degrees(np.arccos(dots))
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["row", "col", "error_degrees"])
        for r, c in zip(*np.nonzero(joint)):
            w.writerow([int(r), int(c), f"{err[r, c]:.6f}"])


# ---------------------------------------------------------------------------
# normal integration


@dataclass
class IntegrationInfo:
    iterations: int
    max_update: float
    excluded: np.ndarray


def rescale_to_unit_range(depth, mask) -> np.ndarray:
    """Affinely map depth over ``mask`` onto [-1, 1]; NaN elsewhere."""
    out = np.full(depth.shape, np.nan)
    vals = depth[mask]
    if vals.size == 0:
        raise ValueError("empty mask")
    lo, hi = vals.min(), vals.max()
    out[mask] = 0.0 if hi == lo else 2.0 * (vals - lo) / (hi - lo) - 1.0
    return out


def integrate_normals_horn_brooks(nmap: NormalMap, mask=None, iterations: int = 20000, tolerance: float = 1e-12,
                                  spacing: float = 1.0, rescale: bool = False, return_info: bool = False,
                                  omega: float | None = None):
    """Recover depth from gradients (p, q) = (-n_x/n_z, -n_y/n_z) by SOR relaxation.

    Minimises the sum over neighbouring valid pixel pairs of
    ``(z_j - z_i - spacing * (g_i + g_j) / 2)^2``, columns carrying p and rows
    carrying q.  The result is mean-zero over the integrated pixels.
    """
    mask = nmap.valid if mask is None else (np.asarray(mask, dtype=bool) & nmap.valid)
    nz = nmap.normals[..., 2]
    excluded = mask & (np.abs(nz) <= 0.01)
    if excluded.any():
        log.warning("excluding %d pixels with |n_z| <= 0.01 from integration", int(excluded.sum()))
    dom = mask & ~excluded
    H, W = dom.shape
    safe_nz = np.where(dom, nz, 1.0)
    p = np.where(dom, -nmap.normals[..., 0] / safe_nz, 0.0)
    q = np.where(dom, -nmap.normals[..., 1] / safe_nz, 0.0)

    # edge validity and target differences z[right]-z[here], z[down]-z[here]
    ex = dom[:, :-1] & dom[:, 1:]
    ey = dom[:-1, :] & dom[1:, :]
    gx = np.where(ex, spacing * (p[:, :-1] + p[:, 1:]) / 2, 0.0)
    gy = np.where(ey, spacing * (q[:-1, :] + q[1:, :]) / 2, 0.0)
    deg = np.zeros((H, W))
    deg[:, :-1] += ex
    deg[:, 1:] += ex
    deg[:-1, :] += ey
    deg[1:, :] += ey
    # constant part of the neighbour sum: -sum_j g_ij
    rhs = np.zeros((H, W))
    rhs[:, :-1] += gx       # right neighbour: z_i = z_j - gx
    rhs[:, 1:] -= gx        # left neighbour: z_i = z_j + gx
    rhs[:-1, :] += gy
    rhs[1:, :] -= gy
    active = dom & (deg > 0)
    inv_deg = np.where(active, 1.0 / np.maximum(deg, 1), 0.0)
    if omega is None:
        omega = 2.0 / (1.0 + np.sin(np.pi / max(H, W, 2)))
    parity = (np.add.outer(np.arange(H), np.arange(W)) % 2).astype(bool)
    colors = [active & ~parity, active & parity]

    z = np.zeros((H, W))
    max_update = np.inf
    it = 0
    for it in range(1, iterations + 1):
        max_update = 0.0
        for sel in colors:
            nb = np.zeros((H, W))
            nb[:, :-1] += np.where(ex, z[:, 1:], 0.0)
            nb[:, 1:] += np.where(ex, z[:, :-1], 0.0)
            nb[:-1, :] += np.where(ey, z[1:, :], 0.0)
            nb[1:, :] += np.where(ey, z[:-1, :], 0.0)
            target = (nb - rhs) * inv_deg
            upd = omega * (target - z)
            z = np.where(sel, z + upd, z)
            if sel.any():
                max_update = max(max_update, float(np.max(np.abs(upd[sel]))))
        if max_update < tolerance:
            break
    depth = np.full((H, W), np.nan)
    if dom.any():
        depth[dom] = z[dom] - z[dom].mean()
    if rescale:
        depth = rescale_to_unit_range(np.nan_to_num(depth), dom)
    dm = DepthMap(np.where(dom, depth, np.inf))
    if return_info:
        return dm, IntegrationInfo(it, max_update, excluded)
    return dm
