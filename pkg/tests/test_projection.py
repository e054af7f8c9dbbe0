import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadgcn import autodiff as ad
from cadgcn.autodiff import Tensor
from cadgcn.errors import ShapeError
from cadgcn.projection import SoftAssignment, assign_pixels, project, reproject
from cadgcn.segmentation import SegmentationMap, pixel_neighborhood, region_adjacency
from conftest import central_differences, max_relative_error


def _pattern(region_of):
    region_of = np.asarray(region_of)
    n = int(region_of.max()) + 1
    return pixel_neighborhood(SegmentationMap(region_of, n, region_adjacency(region_of, n)))


def _fixed(P_dense):
    rows, cols = np.nonzero(P_dense > 0)
    n, c = P_dense.shape
    return SoftAssignment(rows, cols, Tensor(P_dense[rows, cols]), n, c)


def test_zero_distance_gives_one():
    Z = np.array([[1.0, 2.0], [0.0, 0.0]])
    V = np.array([[1.0, 5.0], [2.0, 5.0]])
    P = assign_pixels(Z, V, _pattern([[0, 1]]), gamma=0.2).to_dense()
    assert P[0, 0] == pytest.approx(1.0, abs=1e-14)


def test_outside_neighborhood_is_zero():
    # regions 0 and 2 never touch
    nb = _pattern([[0, 1, 2]])
    P = assign_pixels(np.zeros((3, 1)), np.zeros((1, 3)), nb, 0.2).to_dense()
    assert P[0, 2] == 0.0 and P[2, 0] == 0.0
    assert np.all(P[[0, 0, 1, 1, 1, 2, 2], [0, 1, 0, 1, 2, 1, 2]] > 0)


def test_kernel_value():
    # squared distance 5 with gamma 0.2 gives exp(-1)
    Z = np.array([[1.0, 2.0]])
    V = np.zeros((2, 1))
    P = assign_pixels(Z, V, (np.array([0]), np.array([0])), gamma=0.2).to_dense()
    assert P[0, 0] == pytest.approx(math.exp(-1), rel=1e-14)
    assert P[0, 0] == pytest.approx(0.367879, abs=1e-6)


def test_project_uniform_is_mean():
    Z = np.random.default_rng(0).normal(size=(5, 3))
    X = project(_fixed(np.full((5, 1), 0.3)), Z).data
    np.testing.assert_allclose(X[0], Z.mean(axis=0), atol=1e-14)


def test_project_one_hot_is_hard_mean():
    Z = np.random.default_rng(1).normal(size=(6, 2))
    region = np.array([0, 0, 1, 1, 1, 2])
    X = project(_fixed(np.eye(3)[region]), Z).data
    for r in range(3):
        np.testing.assert_allclose(X[r], Z[region == r].mean(axis=0), atol=1e-14)


def test_project_hand_weights():
    Z = np.array([[1.0, 0.0], [0.0, 2.0], [5.0, 5.0]])
    P = np.array([[1.0], [math.exp(-1)], [0.0]])
    X = project(_fixed(P), Z).data
    expected = (Z[0] + math.exp(-1) * Z[1]) / (1 + math.exp(-1))
    np.testing.assert_allclose(X[0], expected, atol=1e-15)


def test_reproject_examples():
    H = np.array([[1.0, 2.0], [3.0, -1.0]])
    O = reproject(_fixed(np.eye(2)[[0, 1, 1]]), H).data
    np.testing.assert_array_equal(O, H[[0, 1, 1]])
    P = _fixed(np.array([[0.6, 0.4]]))
    np.testing.assert_allclose(reproject(P, H).data, [0.6 * H[0] + 0.4 * H[1]], atol=1e-15)
    np.testing.assert_array_equal(reproject(P, np.zeros((2, 3))).data, np.zeros((1, 3)))
    with pytest.raises(ShapeError):
        reproject(P, np.zeros((3, 3)))


def test_gradient_wrt_anchors_through_projection():
    rng = np.random.default_rng(5)
    region_of = np.array([[0, 0, 1], [2, 2, 1], [2, 3, 3]])
    nb = _pattern(region_of)
    Z = rng.uniform(size=(9, 3))
    V = rng.uniform(size=(3, 4))
    weights = rng.normal(size=(4, 3))

    def objective(Vt):
        P = assign_pixels(Z, Vt, nb, 0.7)
        X = project(P, Z)
        return ad.sum_(ad.mul(X, weights)) + ad.sum_(reproject(P, X) * 0.3)

    Vt = Tensor(V, requires_grad=True)
    (g,) = ad.backward(objective(Vt), [Vt])
    num = central_differences(lambda: float(objective(Tensor(V)).data), [V])
    assert max_relative_error([g], num) <= 1e-4


def _random_assignment(seed, n=12, c=4):
    rng = np.random.default_rng(seed)
    region_of = rng.integers(0, c, size=(3, 4))
    region_of[0, :c] = np.arange(c)  # every region present
    nb = _pattern(region_of)
    Z = rng.uniform(size=(n, 3))
    V = rng.uniform(size=(3, c))
    return nb, Z, V, rng


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 100_000))
def test_sparsity_pattern_frozen_across_updates(seed):
    nb, Z, V, rng = _random_assignment(seed)
    first = assign_pixels(Z, V, nb, 0.2)
    later = assign_pixels(Z, V + rng.normal(scale=2.0, size=V.shape), nb, 0.2)
    dense_a, dense_b = first.to_dense(), later.to_dense()
    expected = np.zeros_like(dense_a, dtype=bool)
    expected[nb] = True
    assert np.array_equal(dense_a > 0, expected)
    assert np.array_equal(dense_b > 0, expected)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 100_000), st.floats(0.01, 100.0))
def test_project_invariant_to_column_scaling(seed, scale):
    nb, Z, V, rng = _random_assignment(seed)
    P = assign_pixels(Z, V, nb, 0.2)
    j = int(rng.integers(0, P.n_regions))
    w = P.weights.data * np.where(P.cols == j, scale, 1.0)
    scaled = SoftAssignment(P.rows, P.cols, Tensor(w), P.n_pixels, P.n_regions)
    np.testing.assert_allclose(project(scaled, Z).data, project(P, Z).data, rtol=1e-12, atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 100_000), st.floats(-5, 5), st.floats(-5, 5))
def test_reproject_is_linear(seed, a, b):
    nb, Z, V, rng = _random_assignment(seed)
    P = assign_pixels(Z, V, nb, 0.2)
    H1, H2 = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    lhs = reproject(P, a * H1 + b * H2).data
    rhs = a * reproject(P, H1).data + b * reproject(P, H2).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
