import json

import numpy as np
import pytest

from nrf_mvps.evaluation import (
    PSNR_CAP,
    angular_error,
    angular_errors,
    chamfer_l1,
    depth_l1,
    projected_depth,
    psnr,
    render_view,
    write_report,
    write_table,
)
from nrf_mvps.geometry import Ray
from nrf_mvps.neural_field import EncodingConfig, FieldArch, init_field
from nrf_mvps.photometric_stereo import estimate_normal_map
from nrf_mvps.scene_data import NormalMap
from nrf_mvps.surface_extraction import Mesh, marching_cubes, lattice_points, DensityGrid
from nrf_mvps.volume_renderer import RenderConfig, render_ray

ENC, ARCH = EncodingConfig(3, 1, 1), FieldArch(2, 16, 16)


def sphere_mesh(res=32, r=0.5, center=(0, 0, 0)):
    lo, hi = -np.ones(3), np.ones(3)
    pts = lattice_points(lo, hi, res)
    return marching_cubes(DensityGrid(r - np.linalg.norm(pts - np.asarray(center), axis=-1), lo, hi), 0.0)


# ---------------------------------------------------------------- PSNR

def test_psnr_examples():
    img = np.random.default_rng(0).random((8, 8, 3))
    assert psnr(img, img) == PSNR_CAP == 99
    assert psnr(np.zeros((10, 10)), np.full((10, 10), 0.1)) == pytest.approx(20.0, abs=1e-12)
    with pytest.raises(ValueError):
        psnr(np.zeros((2, 2)), np.zeros((2, 3)))


def test_psnr_decreases_with_noise():
    rng = np.random.default_rng(1)
    img = rng.random((32, 32, 3))
    means = []
    for s in (0.01, 0.02, 0.05, 0.1):
        means.append(np.mean([psnr(img, img + rng.normal(0, s, img.shape)) for _ in range(10)]))
    assert all(a > b for a, b in zip(means, means[1:]))


# ---------------------------------------------------------------- Chamfer

def test_chamfer_identical_is_zero():
    m = sphere_mesh()
    assert chamfer_l1(m, m, 5000, seed=3) == 0.0


def test_chamfer_unit_separated_triangles():
    a = Mesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    b = Mesh([[0, 0, 1], [1, 0, 1], [0, 1, 1]], [[0, 1, 2]])
    assert chamfer_l1(a, b, 2000) == pytest.approx(1.0, abs=1e-12)


def test_chamfer_symmetric_and_translation_invariant():
    a = sphere_mesh(24)
    b = sphere_mesh(24, r=0.45, center=(0.05, 0.0, -0.02))
    ab = chamfer_l1(a, b, 4000, seed=2)
    assert ab == chamfer_l1(b, a, 4000, seed=2)
    assert 0.03 < ab < 0.1
    shift = np.array([0.25, -1.0, 0.5])
    moved = chamfer_l1(Mesh(a.vertices + shift, a.triangles), Mesh(b.vertices + shift, b.triangles), 4000, seed=2)
    assert moved == pytest.approx(ab, abs=1e-12)


def test_chamfer_empty_mesh_raises():
    empty = Mesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=int))
    with pytest.raises(ValueError):
        chamfer_l1(empty, sphere_mesh(16))


# ---------------------------------------------------------------- depth

def test_depth_l1_affine_invariance():
    rng = np.random.default_rng(0)
    d = rng.uniform(2, 3, (16, 16))
    mask = rng.random((16, 16)) > 0.3
    assert depth_l1(d, d, mask) == 0.0
    assert depth_l1(d + 5.0, d, mask) == pytest.approx(0.0, abs=1e-12)
    assert depth_l1(2.0 * d - 1.0, d, mask) == pytest.approx(0.0, abs=1e-12)
    assert depth_l1(-d, d, mask) > 0.1
    with pytest.raises(ValueError):
        depth_l1(d, d, np.zeros_like(mask))


def test_mesh_projected_depth_matches_ground_truth(sphere_bundle):
    gt = sphere_bundle.ground_truth
    dm = projected_depth(gt.mesh, sphere_bundle, 0)
    both = dm.valid & gt.depths[0].valid
    assert both.sum() > 0.95 * gt.depths[0].valid.sum()
    assert np.mean(np.abs(dm.depth[both] - gt.depths[0].depth[both])) < 5e-3
    assert depth_l1(dm, gt.depths[0], both) < 0.01


# ---------------------------------------------------------------- normals

def test_angular_error_examples():
    valid = np.ones((1, 3), bool)
    gt = NormalMap(np.array([[[0, 0, -1.0]] * 3]), valid)
    pred = NormalMap(np.array([[[0, 0, -1.0], [1, 0, 0], [0, 0, 1.0]]]), valid)
    np.testing.assert_allclose(angular_errors(pred, gt), [0, 90, 180], atol=1e-12)
    assert angular_error(gt, gt) == (0.0, 0.0)
    with pytest.raises(ValueError):
        angular_error(NormalMap(pred.normals, ~valid), gt)


def test_woodham_normals_on_sphere_bundle(sphere_bundle):
    est = estimate_normal_map(sphere_bundle, 1, "woodham")
    mean, median = angular_error(est, sphere_bundle.ground_truth.normals[1])
    # attached shadows bias grazing pixels; the interior is exact
    assert median < 0.01 and mean < 5.0


# ---------------------------------------------------------------- rendering

def test_zero_density_renders_black(sphere_bundle):
    c = init_field(ENC, ARCH, 0)
    for k in c.weights:
        c.weights[k][:] = 0
    rv = render_view(c, c, sphere_bundle, 0, None, RenderConfig(4, 4, False))
    assert rv.image.shape == (64, 64, 3) and rv.depth.shape == (64, 64)
    assert not rv.image.any()


def test_render_view_matches_per_ray_and_threads(sphere_bundle):
    c = init_field(ENC, ARCH, 1, np.float64)
    f = init_field(ENC, ARCH, 2, np.float64)
    nm = estimate_normal_map(sphere_bundle, 0, "woodham")
    cfg = RenderConfig(8, 0, perturb=False)
    a = render_view(c, f, sphere_bundle, 0, nm, cfg, threads=1, chunk=500)
    b = render_view(c, f, sphere_bundle, 0, nm, cfg, threads=3, chunk=500)
    np.testing.assert_array_equal(a.image, b.image)
    view = sphere_bundle.views[0]
    o, d, tn, tf = sphere_bundle.view_rays(0)
    for pix in (0, 32 * 64 + 32, 40 * 64 + 20):
        r, col = divmod(pix, 64)
        n = np.zeros(3)
        if nm.valid[r, col]:
            n = view.pose.rotation @ nm.normals[r, col]
        _, cf, _ = render_ray(c, f, Ray(o[pix], d[pix], tn[pix], tf[pix]), n, cfg, np.random.default_rng(0))
        np.testing.assert_allclose(a.image[r, col], cf, atol=1e-12)


# ---------------------------------------------------------------- reports

def test_reports_are_deterministic(tmp_path):
    m = {"psnr": 20.5, "chamfer": 0.01, "nested": {"b": 1, "a": 2}}
    write_report(tmp_path / "a.json", m)
    write_report(tmp_path / "b.json", dict(reversed(list(m.items()))))
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert json.loads((tmp_path / "a.json").read_text()) == m
    write_table(tmp_path / "t.csv", [{"view": 0, "psnr": 0.1}, {"view": 1, "psnr": 0.2}])
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "view,psnr"
