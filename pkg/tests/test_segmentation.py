import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from cadgcn.data import HsiCube
from cadgcn.errors import ContractError
from cadgcn.segmentation import (
    SegmentationMap,
    init_anchors,
    pca_reduce,
    pixel_neighborhood,
    principal_components,
    region_adjacency,
    slic_segment,
)


def canonical(labels):
    """Relabel in raster-scan order of first appearance."""
    flat = labels.ravel()
    _, first = np.unique(flat, return_index=True)
    order = flat[np.sort(first)]
    lut = {v: i for i, v in enumerate(order)}
    return np.vectorize(lut.get)(labels)


def lloyd(points, centers, iters=20):
    """Plain k-means with nearest-center ties broken by lowest index."""
    for _ in range(iters):
        d = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = np.argmin(d, axis=1)
        centers = np.array([points[assign == j].mean(axis=0) for j in range(len(centers))])
    return assign


# --- PCA ---------------------------------------------------------------


def test_pca_matches_svd_oracle():
    X = np.array([[2.0, 0.0, 1.0], [0.0, 1.0, 3.0], [1.0, 4.0, 0.0]])
    comps, ratio, mean = principal_components(X, 2)
    _, s, vt = np.linalg.svd(X - X.mean(axis=0), full_matrices=False)
    for k in range(2):
        ref = vt[k] * np.sign(vt[k][np.argmax(np.abs(vt[k]))])
        np.testing.assert_allclose(comps[:, k], ref, atol=1e-12)
    np.testing.assert_allclose(ratio, (s**2 / (s**2).sum())[:2], atol=1e-12)


def test_pca_rank_one_cube():
    spectrum = np.array([1.0, 2.0, -1.0, 0.5])
    scale = np.random.default_rng(0).uniform(0.5, 2, size=(5, 6, 1))
    _, ratio, _ = principal_components((scale * spectrum).reshape(-1, 4), 1)
    assert ratio[0] == pytest.approx(1.0, abs=1e-12)


def test_pca_full_basis_reconstructs():
    values = np.random.default_rng(1).normal(size=(4, 5, 6))
    flat = values.reshape(-1, 6)
    comps, _, mean = principal_components(flat, 6)
    scores = pca_reduce(HsiCube(values), 6).reshape(-1, 6)
    assert np.max(np.abs(scores @ comps.T + mean - flat)) < 1e-9


def test_pca_sign_convention_and_range():
    values = np.random.default_rng(2).normal(size=(3, 3, 4))
    comps, _, _ = principal_components(values.reshape(-1, 4), 3)
    for k in range(3):
        assert comps[np.argmax(np.abs(comps[:, k])), k] > 0
    with pytest.raises(ContractError):
        pca_reduce(HsiCube(values), 5)
    with pytest.raises(ContractError):
        pca_reduce(HsiCube(values), 0)


# --- SLIC --------------------------------------------------------------


def test_constant_image_gives_blocks_matching_lloyd():
    seg = slic_segment(np.zeros((4, 4, 1)), c=4, compactness=1.0, iters=10)
    yy, xx = np.indices((4, 4))
    pts = np.stack([yy.ravel(), xx.ravel()], axis=1).astype(float)
    oracle = lloyd(pts, np.array([[0.5, 0.5], [0.5, 2.5], [2.5, 0.5], [2.5, 2.5]]))
    np.testing.assert_array_equal(seg.region_of, canonical(oracle.reshape(4, 4)))
    np.testing.assert_array_equal(seg.region_of, [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])


@pytest.mark.parametrize("compactness", [0.01, 0.1, 1.0, 10.0])
def test_constant_image_invariant_to_compactness(compactness):
    ref = slic_segment(np.zeros((6, 9, 2)), c=6, compactness=0.1, iters=5)
    seg = slic_segment(np.zeros((6, 9, 2)), c=6, compactness=compactness, iters=5)
    np.testing.assert_array_equal(seg.region_of, ref.region_of)


def test_single_region():
    seg = slic_segment(np.random.default_rng(0).normal(size=(5, 7, 3)), c=1)
    assert seg.region_count == 1 and np.all(seg.region_of == 0)


def test_two_tone_split_matches_two_means():
    f = np.zeros((4, 8, 1))
    f[:, 4:] = 1.0
    compactness = 0.1
    seg = slic_segment(f, c=2, compactness=compactness, iters=10)
    step = np.sqrt(32 / 2)
    yy, xx = np.indices((4, 8))
    pts = np.stack([f.ravel(), compactness / step * yy.ravel(), compactness / step * xx.ravel()], axis=1)
    seeds = pts[[1 * 8 + 1, 1 * 8 + 5]]
    oracle = canonical(lloyd(pts, seeds).reshape(4, 8))
    np.testing.assert_array_equal(seg.region_of, oracle)
    np.testing.assert_array_equal(seg.region_of, (xx >= 4).astype(int))


def test_rejects_too_many_regions():
    with pytest.raises(ContractError):
        slic_segment(np.zeros((2, 2, 1)), c=5)
    with pytest.raises(ContractError):
        slic_segment(np.zeros((2, 2, 1)), c=2, iters=0)


def test_deterministic():
    f = np.random.default_rng(3).normal(size=(20, 17, 3))
    a = slic_segment(f, 12, 0.5, 5)
    b = slic_segment(f, 12, 0.5, 5)
    np.testing.assert_array_equal(a.region_of, b.region_of)


@settings(max_examples=60, deadline=None)
@given(
    h=st.integers(3, 14),
    w=st.integers(3, 14),
    c=st.integers(1, 12),
    compactness=st.sampled_from([0.01, 0.1, 1.0, 5.0]),
    seed=st.integers(0, 10_000),
)
def test_segmentation_invariants(h, w, c, compactness, seed):
    f = np.random.default_rng(seed).normal(size=(h, w, 3))
    seg = slic_segment(f, min(c, h * w), compactness, 4)
    ids = seg.region_of
    assert ids.min() == 0 and ids.max() == seg.region_count - 1
    four = ndimage.generate_binary_structure(2, 1)
    for r in range(seg.region_count):
        mask = ids == r
        assert mask.any()
        assert ndimage.label(mask, structure=four)[1] == 1
    adj = seg.region_adjacency
    assert np.array_equal(adj, adj.T) and adj.diagonal().all()


# --- anchors and neighborhoods -------------------------------------------


def _seg(region_of):
    region_of = np.asarray(region_of)
    n = int(region_of.max()) + 1
    return SegmentationMap(region_of, n, region_adjacency(region_of, n))


def test_anchor_is_region_mean():
    values = np.zeros((1, 3, 4))
    values[0, 1] = 2.0
    values[0, 2] = 5.0
    V = init_anchors(HsiCube(values), _seg([[0, 0, 1]]))
    assert V.shape == (4, 2)
    np.testing.assert_array_equal(V[:, 0], np.ones(4))
    np.testing.assert_array_equal(V[:, 1], np.full(4, 5.0))


def test_anchor_shape_follows_bands_and_regions():
    values = np.random.default_rng(0).uniform(size=(20, 20, 200))
    seg = _seg(np.arange(400).reshape(20, 20) // 2)
    assert init_anchors(HsiCube(values), seg).shape == (200, 200)
    with pytest.raises(ContractError):
        init_anchors(HsiCube(values[:10]), seg)


def test_block_grid_adjacency():
    seg = _seg([[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])
    adj = seg.region_adjacency
    for r in range(4):
        assert adj[r].sum() - 1 == 2  # 4-neighbors never cross the diagonal
    assert not adj[0, 3] and not adj[1, 2]


def test_two_region_neighborhood():
    seg = _seg([[0, 0, 1], [0, 1, 1]])
    rows, cols = pixel_neighborhood(seg)
    assert np.all(np.bincount(rows) == 2)
    own = cols[np.r_[0, np.cumsum(np.bincount(rows))[:-1]]]
    np.testing.assert_array_equal(own, seg.region_of.ravel())


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 6), st.integers(2, 6))
def test_adjacency_symmetric_for_random_maps(seed, h, w):
    ids = np.random.default_rng(seed).integers(0, 4, size=(h, w))
    adj = region_adjacency(ids, 4)
    assert np.array_equal(adj, adj.T)
