import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import cKDTree

from toolforge import nn


BACKENDS = sorted(nn.BACKENDS)


def brute(points, queries):
    d2 = ((queries[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    idx = np.argmin(d2, axis=1)
    return np.sqrt(d2[np.arange(len(queries)), idx]), idx


def test_compiled_backend_is_built() -> None:
    assert "cython" in nn.BACKENDS


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_brute_force(backend, rng) -> None:
    pts = rng.normal(size=(700, 3))
    q = rng.normal(size=(300, 3)) * 1.5
    dist, idx = nn.build_index(pts, backend).query(q)
    bd, bi = brute(pts, q)
    np.testing.assert_allclose(dist, bd, rtol=1e-12, atol=0)
    np.testing.assert_array_equal(idx, bi)


@pytest.mark.parametrize("backend", BACKENDS)
def test_matches_scipy(backend, rng) -> None:
    pts = rng.random((2000, 3))
    q = rng.random((500, 3))
    dist, _ = nn.build_index(pts, backend).query(q)
    sd, _ = cKDTree(pts).query(q)
    np.testing.assert_allclose(dist, sd, rtol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_ties_go_to_lowest_index(backend) -> None:
    pts = np.array([[1.0, 0, 0], [0, 0, 0], [-1.0, 0, 0], [0, 0, 0], [1.0, 0, 0]])
    dist, idx = nn.build_index(pts, backend).query(np.array([[0.0, 0, 0], [2.0, 0, 0],
                                                             [0.0, 0, 0.5]]))
    assert idx.tolist() == [1, 0, 1]
    assert dist.tolist() == [0.0, 1.0, 0.5]


def test_backends_agree_bitwise(rng) -> None:
    pts = rng.normal(size=(1500, 3))
    q = rng.normal(size=(800, 3))
    a = nn.build_index(pts, "python").query(q)
    b = nn.build_index(pts, "cython").query(q)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@pytest.mark.parametrize("backend", BACKENDS)
def test_empty_tree_rejects_queries(backend) -> None:
    tree = nn.build_index(np.empty((0, 3)), backend)
    with pytest.raises(ValueError):
        tree.query(np.zeros((1, 3)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_property_exact_nearest(n, m, seed) -> None:
    r = np.random.default_rng(seed)
    # coarse lattice values force many exact ties
    pts = r.integers(-3, 4, size=(n, 3)).astype(float)
    q = r.integers(-3, 4, size=(m, 3)).astype(float)
    bd, bi = brute(pts, q)
    for backend in BACKENDS:
        d, i = nn.build_index(pts, backend).query(q)
        assert np.array_equal(d, bd) and np.array_equal(i, bi)
