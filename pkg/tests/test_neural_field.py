import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrf_mvps.neural_field import (
    EncodingConfig,
    FieldArch,
    eval_density,
    eval_field,
    forward,
    fourier_encode,
    grad_field,
    init_field,
    layer_shapes,
    load_checkpoint,
    save_checkpoint,
)

SMALL_ENC = EncodingConfig(2, 1, 1)
TINY = FieldArch(depth=2, width=8, color_width=8)


def inputs(params, B, rng, dtype=np.float64):
    e = params.enc
    x = fourier_encode(rng.normal(size=(B, 3)).astype(dtype), e.L_pos)
    d = fourier_encode(rng.normal(size=(B, 3)).astype(dtype), e.L_dir)
    n = fourier_encode(rng.normal(size=(B, 3)).astype(dtype), e.L_normal)
    return x, d, n


# ---------------------------------------------------------------- encoding

def test_encoding_examples():
    np.testing.assert_array_equal(fourier_encode(np.array([0.0]), 1), [0.0, 1.0])
    np.testing.assert_allclose(fourier_encode(np.array([np.pi / 2]), 2), [1, 0, 0, -1], atol=1e-15)
    assert fourier_encode(np.zeros(3), 4).shape == (24,)


def test_default_encoding_dims():
    enc = EncodingConfig()
    assert (enc.pos_dim, enc.dir_dim, enc.normal_dim) == (60, 24, 24)
    shapes = layer_shapes(enc, FieldArch())
    assert shapes["trunk.0"] == (60, 256)
    assert shapes["inject"] == (256 + 24 + 24, 256)
    assert sum(k.startswith("trunk.") for k in shapes) == 8


@settings(max_examples=50, deadline=None)
@given(k=st.integers(1, 5), L=st.integers(1, 8))
def test_encoding_dimension_law(k, L):
    v = np.linspace(-1, 1, k)
    assert fourier_encode(v, L).shape == (2 * L * k,)
    assert fourier_encode(np.tile(v, (7, 1)), L).shape == (7, 2 * L * k)


def test_encoding_config_rejects_zero():
    with pytest.raises(ValueError):
        EncodingConfig(L_pos=0)


# ---------------------------------------------------------------- init / eval

def test_init_determinism_and_shapes():
    arch = FieldArch(depth=4, width=64, color_width=64)
    a = init_field(EncodingConfig(), arch, seed=5)
    b = init_field(EncodingConfig(), arch, seed=5)
    c = init_field(EncodingConfig(), arch, seed=6)
    for k in a.weights:
        np.testing.assert_array_equal(a.weights[k], b.weights[k])
    assert any(not np.array_equal(a.weights[k], c.weights[k]) for k in a.weights)
    for name, shape in layer_shapes(EncodingConfig(), arch).items():
        assert a.weights[f"{name}.W"].shape == shape
        assert a.weights[f"{name}.b"].shape == (shape[1],)


@pytest.mark.parametrize("arch", [FieldArch(depth=4, width=64, color_width=64), FieldArch(depth=2, width=16)])
def test_initial_density_is_alive(arch):
    # a field with sigma = 0 everywhere gets no gradient through the relu
    pts = np.random.default_rng(0).uniform(-1, 1, (2000, 3))
    for seed in range(40):
        sigma = eval_density(init_field(EncodingConfig(), arch, seed=seed), pts)
        assert (sigma > 0).mean() > 0.5


def test_zero_color_layer_gives_grey():
    p = init_field(SMALL_ENC, TINY, seed=0, dtype=np.float64)
    p.weights["color.W"][:] = 0
    p.weights["color.b"][:] = 0
    out = eval_field(p, *inputs(p, 5, np.random.default_rng(0)))
    np.testing.assert_array_equal(out.color, 0.5)


def test_zero_density_head_gives_zero_sigma():
    p = init_field(SMALL_ENC, TINY, seed=0, dtype=np.float64)
    p.weights["density.W"][:] = 0
    p.weights["density.b"][:] = 0
    out = eval_field(p, *inputs(p, 5, np.random.default_rng(0)))
    np.testing.assert_array_equal(out.sigma, 0.0)


def test_eval_is_reproducible_and_bounded():
    p = init_field(EncodingConfig(), FieldArch(depth=4, width=64, color_width=64), seed=3)
    x, d, n = inputs(p, 200, np.random.default_rng(1), np.float32)
    a = eval_field(p, x, d, n)
    b = eval_field(p, x, d, n)
    np.testing.assert_array_equal(a.sigma, b.sigma)
    np.testing.assert_array_equal(a.color, b.color)
    assert np.all(a.sigma >= 0) and np.all((a.color >= 0) & (a.color <= 1))


def test_dimension_mismatch_raises():
    p = init_field(SMALL_ENC, TINY, seed=0)
    x, d, n = inputs(p, 2, np.random.default_rng(0), np.float32)
    with pytest.raises(ValueError):
        eval_field(p, x[:, :-1], d, n)
    with pytest.raises(ValueError):
        eval_field(p, x, None, n)


def test_ablation_flags_drop_inputs():
    arch = FieldArch(depth=2, width=8, color_width=8, use_view_dir=False, use_normals=False)
    p = init_field(SMALL_ENC, arch, seed=0)
    assert p.weights["inject.W"].shape == (8, 8)
    x, _, _ = inputs(p, 3, np.random.default_rng(0), np.float32)
    assert eval_field(p, x).color.shape == (3, 3)


def test_density_ignores_direction_and_normal():
    p = init_field(SMALL_ENC, TINY, seed=2, dtype=np.float64)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (10, 3))
    x = fourier_encode(pts, SMALL_ENC.L_pos)
    _, d1, n1 = inputs(p, 10, rng)
    _, d2, n2 = inputs(p, 10, rng)
    np.testing.assert_array_equal(eval_field(p, x, d1, n1).sigma, eval_field(p, x, d2, n2).sigma)
    np.testing.assert_allclose(eval_density(p, pts), eval_field(p, x, d1, n1).sigma, atol=1e-15)


# ---------------------------------------------------------------- gradients

def loss_of(p, x, d, n, gs, gc):
    out, _ = forward(p, x, d, n)
    return float(np.sum(out.sigma * gs) + np.sum(out.color * gc))


def rel_err(a, fd):
    # central differences at h=1e-5 carry ~1e-11 absolute truncation error, so
    # gradients below 1e-4 are compared against the floor instead of themselves
    return abs(a - fd) / max(abs(a), abs(fd), 1e-4)


def well_posed_params(seed):
    # positive density bias keeps pre-activations away from the relu kink
    p = init_field(SMALL_ENC, TINY, seed=seed, dtype=np.float64)
    p.weights["density.b"][:] = 2.0
    return p


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_match_central_differences(seed):
    p = well_posed_params(seed)
    rng = np.random.default_rng(seed + 10)
    x, d, n = inputs(p, 6, rng)
    gs, gc = rng.normal(size=6), rng.normal(size=(6, 3))
    grads = grad_field(p, x, d, n, gs, gc)
    h = 1e-5
    worst = 0.0
    for key, W in p.weights.items():
        flat = W.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_of(p, x, d, n, gs, gc)
            flat[i] = old - h
            dn = loss_of(p, x, d, n, gs, gc)
            flat[i] = old
            fd = (up - dn) / (2 * h)
            a = grads[key].reshape(-1)[i]
            worst = max(worst, rel_err(a, fd))
    assert worst < 1e-6


def test_zero_upstream_gives_zero_gradients():
    p = init_field(SMALL_ENC, TINY, seed=0, dtype=np.float64)
    x, d, n = inputs(p, 4, np.random.default_rng(0))
    g = grad_field(p, x, d, n, np.zeros(4), np.zeros((4, 3)))
    assert all(not np.any(v) for v in g.values())


def test_gradient_linear_in_batch():
    p = init_field(SMALL_ENC, TINY, seed=1, dtype=np.float64)
    rng = np.random.default_rng(1)
    x, d, n = inputs(p, 8, rng)
    gs, gc = rng.normal(size=8), rng.normal(size=(8, 3))
    total = grad_field(p, x, d, n, gs, gc)
    parts = [grad_field(p, x[i], d[i], n[i], gs[i], gc[i]) for i in range(8)]
    for k in total:
        np.testing.assert_allclose(total[k], sum(g[k] for g in parts), atol=1e-12, rtol=0)


# ---------------------------------------------------------------- checkpoints

def test_checkpoint_round_trip(tmp_path):
    a = init_field(SMALL_ENC, TINY, seed=1)
    b = init_field(SMALL_ENC, FieldArch(depth=2, width=8, color_width=8, use_normals=False), seed=2,
                   dtype=np.float64)
    path = tmp_path / "c.bin"
    save_checkpoint(path, {"coarse": a, "fine": b}, {"step": 7})
    nets, meta = load_checkpoint(path)
    assert meta == {"step": 7}
    for name, ref in (("coarse", a), ("fine", b)):
        got = nets[name]
        assert got.enc == ref.enc and got.arch == ref.arch
        for k in ref.weights:
            assert got.weights[k].dtype == ref.weights[k].dtype
            np.testing.assert_array_equal(got.weights[k], ref.weights[k])


def test_checkpoint_rejects_other_version(tmp_path):
    path = tmp_path / "c.bin"
    save_checkpoint(path, {"coarse": init_field(SMALL_ENC, TINY)})
    raw = bytearray(path.read_bytes())
    raw[8] = 99
    path.write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="version"):
        load_checkpoint(path)
    path.write_bytes(b"garbage")
    with pytest.raises(ValueError):
        load_checkpoint(path)
