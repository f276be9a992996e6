"""Batched ray optimisation of the coarse and fine fields.

Loss over a batch B of rays::

    L = sum_r |C_coarse(r) - C(r)|^2 + |C_fine(r) - C(r)|^2

Each step splits the batch into fixed-size chunks, renders and
back-propagates every chunk with its own random stream keyed by
(seed, step, chunk), then sums chunk gradients in chunk order.  The result
does not depend on how many worker threads ran the chunks.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import camera_normal_to_world
from .neural_field import EncodingConfig, FieldArch, FieldParams, init_field, save_checkpoint
from .parallel import deterministic_blas, ordered_map
from .scene_data import NormalMap, SceneBundle
from .volume_renderer import RayBatch, RenderConfig, backward_rays, render_rays

log = logging.getLogger(__name__)

DEFAULT_LIGHT_INDEX = 3  # the 4th light, zero-based


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, last_good):
        super().__init__(msg)
        self.last_good = last_good


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, weights: dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(w) for k, w in weights.items()},
                   {k: np.zeros_like(w) for k, w in weights.items()}, 0)


def adam_step(weights: dict, grads: dict, state: AdamState, cfg: AdamConfig, lr: float | None = None):
    """Bias-corrected Adam update.  Returns new (weights, state); inputs are left untouched."""
    lr = cfg.lr if lr is None else lr
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {k!r}")
    t = state.step + 1
    new_w, new_m, new_v = {}, {}, {}
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for k, w in weights.items():
        g = grads[k]
        m = cfg.beta1 * state.m[k] + (1 - cfg.beta1) * g
        v = cfg.beta2 * state.v[k] + (1 - cfg.beta2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        new_w[k] = (w - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(w.dtype)
        new_m[k], new_v[k] = m, v
    return new_w, AdamState(new_m, new_v, t)


def mvps_loss_terms(c_coarse, c_fine, target) -> tuple[float, float]:
    """Summed squared errors of the coarse and fine renders over the batch."""
    c_coarse, c_fine, target = (np.asarray(a, dtype=np.float64) for a in (c_coarse, c_fine, target))
    return float(np.sum((c_coarse - target) ** 2)), float(np.sum((c_fine - target) ** 2))


def mvps_loss(c_coarse, c_fine, target) -> float:
    lc, lf = mvps_loss_terms(c_coarse, c_fine, target)
    return lc + lf


def psnr_from_mse(mse: float) -> float:
    return 99.0 if mse <= 0 else min(99.0, -10.0 * math.log10(mse))


@dataclass
class TrainConfig:
    batch_rays: int = 1024
    epochs: int = 30
    max_steps: int | None = None           # overrides epochs when set
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float | None = None          # multiply lr by this every lr_decay_steps
    lr_decay_steps: int = 10000
    n_coarse: int = 64
    n_fine: int = 128
    seed: int = 0
    use_view_dir: bool = True
    use_normals: bool = True
    object_fraction: float = 0.5
    light_index: int | list = DEFAULT_LIGHT_INDEX
    train_views: list | None = None
    depth: int = 8
    width: int = 256
    color_width: int | None = None
    L_pos: int = 10
    L_dir: int = 4
    L_normal: int = 4
    chunk_rays: int = 64
    background_normal: str = "zero"        # "zero" or "view" (-d, see conditioning_normals)
    threads: int | None = None
    log_every: int = 50

    def __post_init__(self):
        if self.batch_rays < 1:
            raise ValueError("batch_rays must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.object_fraction <= 1:
            raise ValueError("object_fraction must be in [0, 1]")
        if self.background_normal not in BACKGROUND_NORMALS:
            raise ValueError(f"background_normal must be one of {BACKGROUND_NORMALS}")

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps)

    @property
    def render(self) -> RenderConfig:
        return RenderConfig(self.n_coarse, self.n_fine, True)

    @property
    def encoding(self) -> EncodingConfig:
        return EncodingConfig(self.L_pos, self.L_dir, self.L_normal)

    @property
    def arch(self) -> FieldArch:
        return FieldArch(self.depth, self.width, self.color_width or self.width, self.use_view_dir, self.use_normals)


def select_training_light(bundle: SceneBundle, index) -> list[int]:
    """Image index used as the training target for every view."""
    n = len(bundle.views)
    indices = [index] * n if np.isscalar(index) else list(index)
    if len(indices) != n:
        raise ValueError(f"per-view light list has {len(indices)} entries for {n} views")
    for v, i in enumerate(indices):
        n_p = len(bundle.views[v].lights)
        if not 0 <= int(i) < n_p:
            raise IndexError(f"light index {i} out of range for view {v} with {n_p} lights")
    return [int(i) for i in indices]


def random_light_assignment(bundle: SceneBundle, seed: int) -> list[int]:
    """A different (random) light per view, for the multi-light stress test."""
    rng = np.random.default_rng(seed)
    return [int(rng.integers(len(v.lights))) for v in bundle.views]


@dataclass
class RayTable:
    """Every pixel of the training views flattened into rays with targets."""

    origins: np.ndarray
    directions: np.ndarray
    t_near: np.ndarray
    t_far: np.ndarray
    normals: np.ndarray
    colors: np.ndarray
    on_object: np.ndarray

    def batch(self, idx) -> tuple[RayBatch, np.ndarray]:
        return (RayBatch(self.origins[idx], self.directions[idx], self.t_near[idx], self.t_far[idx],
                         self.normals[idx]), self.colors[idx])


BACKGROUND_NORMALS = ("zero", "view")


def conditioning_normals(bundle: SceneBundle, v: int, normal_map: NormalMap | None, directions,
                         background: str = "zero") -> np.ndarray:
    """World-frame conditioning normal per pixel of view ``v``.

    Object pixels with a valid PS normal get that normal.  Other pixels get
    the zero vector, or with ``background="view"`` the vector -d facing the
    camera, which does not single them out as background.
    """
    view = bundle.views[v]
    out = np.zeros_like(directions)
    if background == "view":
        out = -directions / np.linalg.norm(directions, axis=1, keepdims=True)
    elif background != "zero":
        raise ValueError(f"unknown background normal mode {background!r}")
    if normal_map is not None:
        ok = (normal_map.valid & view.mask).reshape(-1)
        if ok.any():
            n_cam = normal_map.normals.reshape(-1, 3)[ok]
            out[ok] = camera_normal_to_world(view.pose, n_cam / np.linalg.norm(n_cam, axis=1, keepdims=True))
    return out


def build_ray_table(bundle: SceneBundle, normal_maps: list[NormalMap], light_index, views=None,
                    background: str = "zero") -> RayTable:
    views = list(range(len(bundle.views))) if views is None else list(views)
    if len(normal_maps) != len(bundle.views):
        raise ValueError("need one normal map per view")
    lights = select_training_light(bundle, light_index)
    parts = []
    for v in views:
        view = bundle.views[v]
        o, d, tn, tf = bundle.view_rays(v)
        n_world = conditioning_normals(bundle, v, normal_maps[v], d, background)
        parts.append((o, d, tn, tf, n_world, view.images[lights[v]].reshape(-1, 3).astype(np.float64),
                      view.mask.reshape(-1)))
    cat = [np.concatenate(x) for x in zip(*parts)]
    return RayTable(*cat)


def sample_ray_batch(table: RayTable, cfg: TrainConfig, rng) -> np.ndarray:
    """Indices into the ray table: ``object_fraction`` from mask pixels, the rest from background."""
    obj = np.flatnonzero(table.on_object)
    bg = np.flatnonzero(~table.on_object)
    n_obj = int(round(cfg.object_fraction * cfg.batch_rays))
    if n_obj > 0 and len(obj) == 0:
        raise ValueError("no object pixels to sample (empty masks)")
    n_bg = cfg.batch_rays - n_obj
    pool_bg = bg if len(bg) else np.arange(len(table.on_object))
    return np.concatenate([rng.choice(obj, n_obj) if n_obj else np.zeros(0, dtype=np.int64),
                           rng.choice(pool_bg, n_bg) if n_bg else np.zeros(0, dtype=np.int64)])


def chunk_rng(seed: int, step: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, step, chunk])))


def loss_and_grads(coarse: FieldParams, fine: FieldParams, rays: RayBatch, target, rcfg: RenderConfig, rng,
                   fine_ts=None):
    """Forward + backward for one chunk.  Returns (loss_coarse, loss_fine, g_coarse, g_fine, render)."""
    res = render_rays(coarse, fine, rays, rcfg, rng, want_cache=True, fine_ts=fine_ts)
    target = np.asarray(target)
    lc, lf = mvps_loss_terms(res.color_coarse, res.color_fine, target)
    g_c, g_f = backward_rays(coarse, fine, res,
                             2.0 * (res.color_coarse - target), 2.0 * (res.color_fine - target))
    return lc, lf, g_c, g_f, res


def step_grads(coarse, fine, table: RayTable, idx, cfg: TrainConfig, step: int):
    """Chunked loss and gradient for the batch ``idx``; sums in chunk order."""
    chunks = [idx[s:s + cfg.chunk_rays] for s in range(0, len(idx), cfg.chunk_rays)]
    rcfg = cfg.render

    def work(k):
        rays, target = table.batch(chunks[k])
        lc, lf, gc, gf, _ = loss_and_grads(coarse, fine, rays, target, rcfg, chunk_rng(cfg.seed, step, k))
        return lc, lf, gc, gf

    results = ordered_map(work, range(len(chunks)), cfg.threads)
    lc, lf, gc, gf = results[0]
    gc = {k: v.copy() for k, v in gc.items()}
    gf = {k: v.copy() for k, v in gf.items()}
    for r in results[1:]:
        lc += r[0]
        lf += r[1]
        for k in gc:
            gc[k] += r[2][k]
        for k in gf:
            gf[k] += r[3][k]
    return lc, lf, gc, gf


@dataclass
class TrainResult:
    coarse: FieldParams
    fine: FieldParams
    log: list[dict] = field(default_factory=list)


def steps_per_epoch(bundle: SceneBundle, cfg: TrainConfig, views=None) -> int:
    views = range(len(bundle.views)) if views is None else views
    masked = sum(int(bundle.views[v].mask.sum()) for v in views)
    return max(1, math.ceil(masked / cfg.batch_rays))


def write_log_csv(path, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss_coarse", "loss_fine", "psnr_train"])
        for r in rows:
            w.writerow([r["step"], repr(r["loss_coarse"]), repr(r["loss_fine"]), repr(r["psnr_train"])])


def checkpoint_meta(cfg: TrainConfig, step: int) -> dict:
    return {"step": step, "n_coarse": cfg.n_coarse, "n_fine": cfg.n_fine, "seed": cfg.seed,
            "use_view_dir": cfg.use_view_dir, "use_normals": cfg.use_normals,
            "background_normal": cfg.background_normal}


def train(bundle: SceneBundle, normal_maps: list[NormalMap], cfg: TrainConfig = TrainConfig(),
          out_dir=None, init=None) -> TrainResult:
    """Optimise coarse and fine fields with Adam; checkpoints per epoch go to ``out_dir``."""
    table = build_ray_table(bundle, normal_maps, cfg.light_index, cfg.train_views, cfg.background_normal)
    dtype = np.float32
    if init is None:
        coarse = init_field(cfg.encoding, cfg.arch, seed=cfg.seed * 2 + 1, dtype=dtype)
        fine = init_field(cfg.encoding, cfg.arch, seed=cfg.seed * 2 + 2, dtype=dtype)
    else:
        coarse, fine = init
    sc, sf = AdamState.zeros_like(coarse.weights), AdamState.zeros_like(fine.weights)
    per_epoch = steps_per_epoch(bundle, cfg, cfg.train_views)
    total = cfg.max_steps if cfg.max_steps is not None else cfg.epochs * per_epoch
    batch_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB47C]))
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    last_good = (coarse.copy(), fine.copy())
    with deterministic_blas():
        for step in range(total):
            idx = sample_ray_batch(table, cfg, batch_rng)
            lc, lf, gc, gf = step_grads(coarse, fine, table, idx, cfg, step)
            if not (math.isfinite(lc) and math.isfinite(lf)):
                if out is not None:
                    save_checkpoint(out / "last_good.bin", {"coarse": last_good[0], "fine": last_good[1]},
                                    checkpoint_meta(cfg, step))
                raise TrainingDiverged(f"loss became non-finite at step {step}", last_good)
            lr = cfg.lr if cfg.lr_decay is None else cfg.lr * cfg.lr_decay ** (step / cfg.lr_decay_steps)
            wc, sc = adam_step(coarse.weights, gc, sc, cfg.adam, lr)
            wf, sf = adam_step(fine.weights, gf, sf, cfg.adam, lr)
            coarse = FieldParams(coarse.enc, coarse.arch, wc)
            fine = FieldParams(fine.enc, fine.arch, wf)
            row = {"step": step, "loss_coarse": lc / len(idx), "loss_fine": lf / len(idx),
                   "psnr_train": psnr_from_mse(lf / (3 * len(idx)))}
            rows.append(row)
            if step % cfg.log_every == 0 or step == total - 1:
                log.info("step %d loss_c %.5f loss_f %.5f psnr %.2f", step, row["loss_coarse"],
                         row["loss_fine"], row["psnr_train"])
            end_of_epoch = (step + 1) % per_epoch == 0 or step == total - 1
            if end_of_epoch:
                last_good = (coarse.copy(), fine.copy())
                if out is not None:
                    save_checkpoint(out / "checkpoint.bin", {"coarse": coarse, "fine": fine},
                                    checkpoint_meta(cfg, step + 1))
                    write_log_csv(out / "train_log.csv", rows)
    return TrainResult(coarse, fine, rows)
