"""Ray sampling, alpha compositing and normal-conditioned ray rendering.

Quadrature: ``alpha_i = 1 - exp(-sigma_i * delta_i)``,
``T_i = prod_{j<i} (1 - alpha_j)``, ``C = sum_i T_i alpha_i c_i`` with
``delta_i = t_{i+1} - t_i`` and the last interval closed at ``t_far``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .geometry import Ray
from .neural_field import FieldParams, backward, forward, fourier_encode, zeros_like

log = logging.getLogger(__name__)

DEFAULT_N_COARSE = 64
DEFAULT_N_FINE = 128


@dataclass
class RaySamples:
    ts: np.ndarray
    deltas: np.ndarray


@dataclass
class RenderOutput:
    color: np.ndarray
    weights: np.ndarray
    transmittance: np.ndarray
    depth: np.ndarray

    @property
    def opacity(self):
        return np.sum(self.weights, axis=-1)


@dataclass(frozen=True)
class RenderConfig:
    n_coarse: int = DEFAULT_N_COARSE
    n_fine: int = DEFAULT_N_FINE
    perturb: bool = True


def sample_deltas(ts, t_far) -> np.ndarray:
    """delta_i = t_{i+1} - t_i, last delta = t_far - t_N."""
    ts = np.asarray(ts)
    t_far = np.asarray(t_far, dtype=ts.dtype)
    return np.concatenate([np.diff(ts, axis=-1), t_far[..., None] - ts[..., -1:]], axis=-1)


def stratified_ts(t_near, t_far, n, rng=None, perturb=True) -> np.ndarray:
    """One uniform draw per equal stratum of [t_near, t_far]; batched over leading dims."""
    t_near = np.asarray(t_near, dtype=np.float64)
    t_far = np.asarray(t_far, dtype=np.float64)
    shape = np.broadcast(t_near, t_far).shape
    if perturb:
        u = rng.random(shape + (n,))
    else:
        u = np.full(shape + (n,), 0.5)
    frac = (np.arange(n) + u) / n
    ts = t_near[..., None] + frac * (t_far - t_near)[..., None]
    # guard against rounding past the far bound
    return np.minimum(ts, t_far[..., None])


def stratified_sample(t_near: float, t_far: float, n: int, rng, perturb=True) -> RaySamples:
    if t_near > t_far:
        raise ValueError("t_near must not exceed t_far")
    if n < 1:
        raise ValueError("need at least one sample")
    ts = stratified_ts(t_near, t_far, n, rng, perturb)
    return RaySamples(ts, sample_deltas(ts, t_far))


def composite_batch(sigmas, colors, deltas, ts=None):
    """Front-to-back compositing over the last sample axis.

    Returns (RenderOutput, cache); cache feeds :func:`composite_backward`.
    """
    sigmas = np.asarray(sigmas)
    if np.any(sigmas < 0):
        raise ValueError("negative density")
    optical = sigmas * deltas
    cum = np.cumsum(optical, axis=-1)
    trans_incl = np.exp(-cum)                      # T_{i+1}
    trans = np.concatenate([np.ones_like(cum[..., :1]), trans_incl[..., :-1]], axis=-1)  # T_i
    alpha = -np.expm1(-optical)
    weights = trans * alpha
    color = np.sum(weights[..., None] * colors, axis=-2)
    depth = np.sum(weights * ts, axis=-1) if ts is not None else None
    out = RenderOutput(color, weights, trans_incl[..., -1], depth)
    return out, (weights, trans_incl, colors, deltas)


def composite_backward(g_color, cache):
    """d(loss)/d(sigma_i), d(loss)/d(c_i) from d(loss)/d(C)."""
    weights, trans_incl, colors, deltas = cache
    gc = np.sum(colors * g_color[..., None, :], axis=-1)   # g . c_i
    s = weights * gc
    suffix = np.cumsum(s[..., ::-1], axis=-1)[..., ::-1] - s  # sum_{i>k} w_i g.c_i
    g_sigma = deltas * (trans_incl * gc - suffix)
    g_colors = weights[..., None] * g_color[..., None, :]
    return g_sigma, g_colors


def composite(sigmas, colors, samples: RaySamples) -> RenderOutput:
    sigmas = np.asarray(sigmas, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64)
    if sigmas.shape[-1] != len(samples.ts) or colors.shape[:-1] != sigmas.shape:
        raise ValueError("sigmas, colors and samples must have matching lengths")
    out, _ = composite_batch(sigmas, colors, samples.deltas, samples.ts)
    return out


def hierarchical_ts(weights, ts, t_near, t_far, n_fine, rng):
    """Inverse-transform draws from the piecewise-constant pdf over bins [t_i, t_{i+1}].

    Returns (sorted fine ts, boolean mask of rays that fell back to uniform).
    """
    weights = np.asarray(weights, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    t_near = np.broadcast_to(np.asarray(t_near, dtype=np.float64), weights.shape[:-1])
    t_far = np.broadcast_to(np.asarray(t_far, dtype=np.float64), weights.shape[:-1])
    edges = np.concatenate([ts, t_far[..., None]], axis=-1)
    total = weights.sum(axis=-1, keepdims=True)
    empty = total[..., 0] <= 0
    pdf = np.divide(weights, total, out=np.zeros_like(weights), where=total > 0)
    cdf = np.concatenate([np.zeros_like(pdf[..., :1]), np.cumsum(pdf, axis=-1)], axis=-1)
    cdf[..., -1] = 1.0
    u = rng.random(weights.shape[:-1] + (n_fine,))
    idx = np.sum(cdf[..., None, 1:-1] <= u[..., :, None], axis=-1)
    # skip zero-probability bins that rounding could select
    lo_c = np.take_along_axis(cdf, idx, axis=-1)
    p = np.take_along_axis(pdf, idx, axis=-1)
    lo_t = np.take_along_axis(edges, idx, axis=-1)
    hi_t = np.take_along_axis(edges, idx + 1, axis=-1)
    frac = np.clip(np.divide(u - lo_c, p, out=np.full_like(u, 0.5), where=p > 0), 0.0, 1.0)
    fine = lo_t + frac * (hi_t - lo_t)
    if np.any(empty):
        uni = t_near[..., None] + u * (t_far - t_near)[..., None]
        fine = np.where(empty[..., None], uni, fine)
        log.debug("hierarchical sampling fell back to uniform on %d rays", int(empty.sum()))
    return np.sort(fine, axis=-1), empty


def hierarchical_resample(weights, ts, n_fine, rng, t_near=None, t_far=None):
    """Single-ray convenience wrapper; bins close at ``t_far`` (defaults to the last coarse t)."""
    ts = np.asarray(ts, dtype=np.float64)
    if n_fine < 1:
        raise ValueError("n_fine must be >= 1")
    t_near = ts[0] if t_near is None else t_near
    t_far = ts[-1] if t_far is None else t_far
    fine, _ = hierarchical_ts(weights, ts, t_near, t_far, n_fine, rng)
    return fine


@dataclass
class RayBatch:
    """Rays in world frame with the per-ray conditioning normal (zero for background)."""

    origins: np.ndarray
    directions: np.ndarray
    t_near: np.ndarray
    t_far: np.ndarray
    normals: np.ndarray

    def __len__(self):
        return len(self.origins)

    def subset(self, sl) -> "RayBatch":
        return RayBatch(self.origins[sl], self.directions[sl], self.t_near[sl], self.t_far[sl], self.normals[sl])


@dataclass
class BatchRender:
    color_coarse: np.ndarray
    color_fine: np.ndarray
    fine: RenderOutput
    fine_ts: np.ndarray
    coarse: RenderOutput
    caches: tuple | None = None


def _pass(params: FieldParams, rays: RayBatch, ts, want_cache):
    dtype = params.dtype
    R, N = ts.shape
    pts = rays.origins[:, None, :] + ts[..., None] * rays.directions[:, None, :]
    x_enc = fourier_encode(pts.reshape(-1, 3).astype(dtype), params.enc.L_pos)
    d_enc = n_enc = None
    if params.arch.use_view_dir:
        d_enc = np.repeat(fourier_encode(rays.directions.astype(dtype), params.enc.L_dir), N, axis=0)
    if params.arch.use_normals:
        n_enc = np.repeat(fourier_encode(rays.normals.astype(dtype), params.enc.L_normal), N, axis=0)
    out, fcache = forward(params, x_enc, d_enc, n_enc)
    deltas = sample_deltas(ts, rays.t_far).astype(dtype)
    res, ccache = composite_batch(out.sigma.reshape(R, N), out.color.reshape(R, N, 3), deltas, ts.astype(dtype))
    return res, (fcache, ccache) if want_cache else None


def render_rays(coarse: FieldParams, fine: FieldParams, rays: RayBatch, cfg: RenderConfig, rng,
                want_cache=False, fine_ts=None) -> BatchRender:
    """Coarse pass on stratified samples, fine pass on the sorted union with resampled points.

    ``fine_ts`` pins the resampled points (their positions carry no gradient).
    """
    coarse_ts = stratified_ts(rays.t_near, rays.t_far, cfg.n_coarse, rng, cfg.perturb)
    c_out, c_cache = _pass(coarse, rays, coarse_ts, want_cache)
    if fine_ts is None:
        if cfg.n_fine > 0:
            extra, _ = hierarchical_ts(c_out.weights, coarse_ts, rays.t_near, rays.t_far, cfg.n_fine, rng)
            fine_ts = np.sort(np.concatenate([coarse_ts, extra], axis=-1), axis=-1)
        else:
            fine_ts = coarse_ts
    f_out, f_cache = _pass(fine, rays, fine_ts, want_cache)
    caches = (c_cache, f_cache) if want_cache else None
    return BatchRender(c_out.color, f_out.color, f_out, fine_ts, c_out, caches)


def backward_rays(coarse: FieldParams, fine: FieldParams, result: BatchRender, g_coarse, g_fine):
    """Parameter gradients of both networks from upstream gradients on the two ray colors."""
    grads = []
    for params, cache, g in ((coarse, result.caches[0], g_coarse), (fine, result.caches[1], g_fine)):
        fcache, ccache = cache
        g_sigma, g_colors = composite_backward(g.astype(params.dtype), ccache)
        grads.append(backward(params, fcache, g_sigma.reshape(-1), g_colors.reshape(-1, 3), zeros_like(params)))
    return grads[0], grads[1]


def render_ray(coarse: FieldParams, fine: FieldParams, ray: Ray, n_ps_world, cfg: RenderConfig, rng):
    """Render one ray.  Returns (coarse color, fine color, fine RenderOutput)."""
    n = np.asarray(n_ps_world, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(n)
    if norm != 0 and abs(norm - 1) > 1e-6:
        raise ValueError("conditioning normal must be unit length or zero")
    rays = RayBatch(ray.origin[None], ray.direction[None], np.array([ray.t_near]),
                    np.array([ray.t_far]), n[None])
    res = render_rays(coarse, fine, rays, cfg, rng)
    f = res.fine
    single = RenderOutput(f.color[0], f.weights[0], f.transmittance[0], f.depth[0])
    return res.color_coarse[0], res.color_fine[0], single
