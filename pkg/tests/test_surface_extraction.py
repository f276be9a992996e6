import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nrf_mvps.neural_field import EncodingConfig, FieldArch, init_field
from nrf_mvps.surface_extraction import (
    ISO_SWEEP,
    DEFAULT_ISO,
    DEFAULT_RES,
    DensityGrid,
    Mesh,
    iso_sweep,
    lattice_points,
    marching_cubes,
    sample_density_grid,
    triangle_table,
)

BOX = (-np.ones(3), np.ones(3))


def indicator_sphere(res, radius=0.5, height=20.0):
    pts = lattice_points(*BOX, res)
    return DensityGrid(height * (np.linalg.norm(pts, axis=-1) < radius), *BOX)


def smooth_blob(res, seed=0):
    pts = lattice_points(*BOX, res)
    rng = np.random.default_rng(seed)
    v = np.zeros(pts.shape[:-1])
    for _ in range(4):
        c = rng.uniform(-0.4, 0.4, 3)
        v += 30 * np.exp(-np.sum((pts - c) ** 2, axis=-1) / 0.1)
    return DensityGrid(v, *BOX)


def test_defaults():
    assert DEFAULT_ISO == 10 and DEFAULT_RES == 512
    assert ISO_SWEEP == (1, 5, 10, 20, 50, 100)


def test_lattice_corner_is_cell_centre():
    pts = lattice_points(*BOX, 8)
    np.testing.assert_allclose(pts[0, 0, 0], -1 + 0.125)
    np.testing.assert_allclose(pts[-1, -1, -1], 1 - 0.125)


def test_constant_density_field_samples_constant():
    enc, arch = EncodingConfig(2, 1, 1), FieldArch(2, 8, 8)
    p = init_field(enc, arch, 0, np.float64)
    for k in p.weights:
        p.weights[k][:] = 0
    p.weights["density.b"][:] = 3.25
    g = sample_density_grid(p, *BOX, 6, chunk=50)
    assert g.res == (6, 6, 6)
    np.testing.assert_array_equal(g.values, 3.25)
    with pytest.raises(ValueError):
        sample_density_grid(p, *BOX, 1)


def test_below_iso_gives_empty_mesh():
    m = marching_cubes(DensityGrid(np.full((5, 5, 5), 3.0), *BOX), 10.0)
    assert m.is_empty and len(m.vertices) == 0


def test_table_basics():
    t = triangle_table()
    assert t.shape == (256, 16, 3)
    assert np.all(t[0] == -1) and np.all(t[255] == -1)
    for c in range(8):
        assert (t[1 << c, :, 0] >= 0).sum() == 1


def max_radial_error(res):
    m = marching_cubes(indicator_sphere(res), 10.0)
    return np.max(np.abs(np.linalg.norm(m.vertices, axis=1) - 0.5)), m


def test_indicator_sphere_accuracy_and_convergence():
    e64, m = max_radial_error(64)
    diag = np.sqrt(3) * 2 / 64
    assert e64 < 1.5 * diag
    e128, _ = max_radial_error(128)
    assert e64 / e128 >= 1.5
    # outward orientation
    assert np.all(np.sum(m.normals * m.vertices, axis=1) > 0)


def edge_use_counts(mesh):
    f = mesh.triangles
    directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    _, counts = np.unique(und, axis=0, return_counts=True)
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    return counts, dcounts


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_smooth_field_is_watertight_and_oriented(seed):
    m = marching_cubes(smooth_blob(40, seed), 10.0)
    counts, dcounts = edge_use_counts(m)
    assert np.all(counts == 2)
    assert np.all(dcounts == 1)
    assert np.all(m.triangle_areas() > 0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), iso=st.floats(0.1, 0.9))
def test_vertices_lie_on_straddling_edges(seed, iso):
    rng = np.random.default_rng(seed)
    g = DensityGrid(rng.random((6, 7, 5)), *BOX)
    m = marching_cubes(g, iso)
    if m.is_empty:
        return
    idx = (m.vertices - g.bbox_min) / g.step - 0.5
    frac = np.abs(idx - np.round(idx))
    assert np.all(np.sum(frac > 1e-9, axis=1) <= 1)
    lo = np.floor(idx + 1e-9).astype(int)
    hi = np.where(frac > 1e-9, np.ceil(idx - 1e-9), np.round(idx)).astype(int)
    lo = np.where(frac > 1e-9, lo, hi)
    a = g.values[lo[:, 0], lo[:, 1], lo[:, 2]]
    b = g.values[hi[:, 0], hi[:, 1], hi[:, 2]]
    assert np.all((a >= iso) != (b >= iso))
    assert np.all(m.triangle_areas() > 0)


def test_area_matches_reference_implementation():
    skm = pytest.importorskip("skimage.measure")
    g = smooth_blob(32, 4)
    m = marching_cubes(g, 10.0)
    verts, faces, _, _ = skm.marching_cubes(g.values, 10.0)
    ref = Mesh(verts, faces)
    # edge crossings coincide; triangulations of non-planar quads may differ
    ours = (m.vertices - g.bbox_min) / g.step - 0.5
    key = lambda v: v[np.lexsort(np.round(v, 9).T[::-1])]
    np.testing.assert_allclose(key(ours), key(np.unique(np.round(verts.astype(np.float64), 5), axis=0)), atol=1e-4)
    assert m.triangle_areas().sum() / g.step[0] ** 2 == pytest.approx(ref.triangle_areas().sum(), rel=1e-3)


def test_iso_sweep_keys_and_monotone_volume():
    g = smooth_blob(32, 5)
    sweep = iso_sweep(g)
    assert list(sweep) == [1.0, 5.0, 10.0, 20.0, 50.0, 100.0]
    assert sweep[100.0].is_empty
    assert sweep[1.0].triangle_areas().sum() > sweep[20.0].triangle_areas().sum()


def test_grid_and_mesh_round_trip(tmp_path):
    g = smooth_blob(12, 6)
    g.save(tmp_path / "g.raw")
    h = DensityGrid.load(tmp_path / "g.raw")
    np.testing.assert_array_equal(h.values, g.values.astype(np.float32))
    np.testing.assert_array_equal(h.bbox_min, g.bbox_min)
    m = marching_cubes(g, 10.0)
    m.save(tmp_path / "m.ply")
    back = Mesh.load(tmp_path / "m.ply")
    np.testing.assert_array_equal(back.triangles, m.triangles)
    np.testing.assert_allclose(back.vertices, m.vertices, atol=1e-6)


def test_mesh_rejects_bad_indices():
    with pytest.raises(ValueError):
        Mesh(np.zeros((3, 3)), [[0, 1, 3]])
