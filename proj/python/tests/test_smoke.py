"""Smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import iternorm as it


def test_version_and_params():
    assert it.__version__
    assert it.num_parameters() == 6349


def test_synth_plane_pca():
    pts, gt = it.synth("plane", 600, sigma=0.0, seed=1)
    assert pts.shape == (600, 3)
    est = it.pca_normals(pts, k=12)
    assert it.rmse_angle(est, gt) < 0.01


def test_estimate_iters0_matches_pca():
    pts, _ = it.synth("sphere", 500, sigma=0.004, seed=2)
    a = it.pca_normals(pts, k=16)
    b = it.estimate_normals(pts, k=16, iters=0)
    np.testing.assert_array_equal(a, b)


def test_sym_eig3_roundtrip():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(64, 3, 3))
    C = 0.5 * (m + m.transpose(0, 2, 1))
    vals, vecs = it.sym_eig3(C)
    assert np.all(np.diff(vals, axis=1) >= 0)
    recon = np.einsum("nij,nj,nkj->nik", vecs, vals, vecs)
    assert np.max(np.abs(recon - C)) < 1e-8


def test_sym_eig3_backward_shape():
    C = np.eye(3)[None] * np.array([1.0, 2.0, 3.0])[None, None] * np.eye(3)
    C = np.diag([1.0, 2.0, 3.0])[None]
    vals, vecs = it.sym_eig3(C)
    dvals = np.array([[1.0, 0.0, 0.0]])
    dC = it.sym_eig3_backward(vals, vecs, dvals, np.zeros((1, 3, 3)))
    np.testing.assert_allclose(dC[0], np.diag([1.0, 0.0, 0.0]), atol=1e-12)


def test_quat_to_rot_orthogonal():
    rng = np.random.default_rng(4)
    q = rng.normal(size=(32, 4))
    R = it.quat_to_rot(q)
    eye = np.einsum("nij,nik->njk", R, R)
    assert np.max(np.abs(eye - np.eye(3))) < 1e-12


def test_knn_graph_structure():
    pts, _ = it.synth("box", 300, seed=5)
    offsets, dst = it.knn_graph(pts, k=8)
    assert offsets.shape == (301,)
    assert offsets[-1] == 300 * 9  # self edge + 8 neighbors
    seg = dst[offsets[0] : offsets[1]]
    assert 0 in seg  # self edge present
    assert sorted(seg.tolist()) == seg.tolist()


def test_io_roundtrip(tmp_path):
    pts, gt = it.synth("cylinder-union", 400, sigma=0.002, seed=6)
    xyz = tmp_path / "c.xyz"
    nrm = tmp_path / "c.normals"
    it.save_xyz(str(xyz), pts)
    it.save_normals(str(nrm), gt)
    back = it.load_xyz(str(xyz))
    np.testing.assert_allclose(back, pts, atol=1e-8)
    assert it.load_normals(str(nrm), 400).shape == (400, 3)


def test_normalize():
    pts, _ = it.synth("sphere", 200, seed=7)
    pts = pts * 11.0 + np.array([5.0, -2.0, 1.0])
    normed, centroid, scale = it.normalize(pts)
    lo, hi = normed.min(axis=0), normed.max(axis=0)
    assert math.isclose(np.linalg.norm(hi - lo), 1.0, rel_tol=1e-9)
    np.testing.assert_allclose(normed * scale + centroid[0], pts, atol=1e-9)


def test_metrics():
    gt = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
    est = np.array([[0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
    assert it.rmse_angle(est, gt, subset=[0]) == pytest.approx(0.0)
    assert it.rmse_angle(est, gt, subset=[1]) == pytest.approx(90.0)
    curve = it.pgp_curve(est, gt, [45.0, 180.0])
    assert curve == pytest.approx([0.5, 1.0])
    assert it.sign_flip_loss(est, gt, subset=[0]) == pytest.approx(0.0)


def test_errors():
    with pytest.raises(it.IoError):
        it.load_xyz("/nonexistent/file.xyz")
    with pytest.raises(ValueError):
        it.estimate_normals(np.zeros((10, 3)), iters=2)  # model required
