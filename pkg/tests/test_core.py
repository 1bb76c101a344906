"""Softmin weights, distance helpers, and point-file round trips."""

import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pixood.core import (
    Dataset,
    FormatError,
    l2_distance,
    labels_path_for,
    pairwise_distances,
    read_points,
    softmin_weights,
    write_points,
)


def _naive_softmin(d, tau, exponent):
    # reference: direct exponentiation, valid only on well-conditioned rows
    z = np.exp(-(d**exponent) / tau)
    return z / z.sum(axis=1, keepdims=True)


def test_l2_distance_matches_norm():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x = rng.normal(size=4)
        c = rng.normal(size=4)
        np.testing.assert_allclose(l2_distance(x, c), np.linalg.norm(x - c), rtol=1e-12)


def test_pairwise_distances_matches_loops():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(17, 3))
    cen = rng.normal(size=(5, 3))
    d = pairwise_distances(pts, cen)
    assert d.shape == (17, 5)
    for i in range(17):
        for k in range(5):
            np.testing.assert_allclose(d[i, k], np.linalg.norm(pts[i] - cen[k]), rtol=1e-10)


def test_softmin_rows_are_distributions():
    rng = np.random.default_rng(2)
    for _ in range(30):
        d = np.abs(rng.normal(size=(12, 6))) * rng.uniform(0.1, 10)
        for e in (1, 2):
            w = softmin_weights(d, tau=rng.uniform(0.05, 5.0), exponent=e)
            assert np.all(w >= 0) and np.all(w <= 1)
            np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-9)


def test_softmin_matches_naive_on_small_values():
    rng = np.random.default_rng(3)
    for _ in range(30):
        d = rng.uniform(0.1, 2.0, size=(8, 4))
        tau = rng.uniform(0.5, 3.0)
        for e in (1, 2):
            np.testing.assert_allclose(
                softmin_weights(d, tau, exponent=e), _naive_softmin(d, tau, e), rtol=1e-12
            )


def test_softmin_hard_limit_is_argmin_indicator():
    rng = np.random.default_rng(4)
    for _ in range(50):
        d = rng.uniform(0.5, 5.0, size=(10, 5))
        w = softmin_weights(d, tau=1e-8, exponent=2)
        hard = np.zeros_like(d)
        hard[np.arange(10), (d**2).argmin(axis=1)] = 1.0
        np.testing.assert_allclose(w, hard, atol=1e-9)


def test_softmin_ties_split_evenly_but_argmax_prefers_low_index():
    # exact distance ties share weight; downstream hard assignment must
    # resolve by lowest index, which argmax does on equal entries
    d = np.array([[1.0, 1.0, 2.0]])
    w = softmin_weights(d, tau=1e-8, exponent=1)
    np.testing.assert_allclose(w[0, 0], w[0, 1], rtol=1e-12)
    assert w.argmax(axis=1)[0] == 0


def test_softmin_uniform_limit():
    rng = np.random.default_rng(5)
    d = rng.uniform(0.0, 3.0, size=(7, 9))
    w = softmin_weights(d, tau=1e8, exponent=2)
    np.testing.assert_allclose(w, 1.0 / 9, atol=1e-6)


def test_softmin_overflow_safe():
    # max-shift keeps huge distances finite
    d = np.array([[1e4, 2e4, 3e4]])
    w = softmin_weights(d, tau=1e-3, exponent=2)
    assert np.all(np.isfinite(w))
    np.testing.assert_allclose(w.sum(), 1.0, atol=1e-12)
    assert w[0, 0] == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=1, max_value=9),
    st.integers(min_value=1, max_value=7),
    st.floats(min_value=0.01, max_value=100.0),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_softmin_shift_invariance(n, k, tau, seed):
    """Adding a constant to every distance^e in a row leaves weights unchanged."""
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.0, 4.0, size=(n, k))
    const = 7.5
    w1 = softmin_weights(d, tau, exponent=1)
    np.testing.assert_allclose(
        softmin_weights(d + const, tau, exponent=1), w1, rtol=1e-9, atol=1e-12
    )
    w2 = softmin_weights(d, tau, exponent=2)
    np.testing.assert_allclose(
        softmin_weights(np.sqrt(d**2 + const), tau, exponent=2), w2, rtol=1e-9, atol=1e-12
    )


def test_dataset_validation():
    pts = np.zeros((4, 2))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan, 0.0]]))
    with pytest.raises(ValueError):
        Dataset(np.empty((0, 2)))
    with pytest.raises(ValueError):
        Dataset(pts, labels=np.array([0, 1, 2, 5]), class_count=3)
    ds = Dataset(pts, labels=np.array([0, 1, 2, 1]), class_count=3)
    assert ds.class_count == 3


def test_points_roundtrip_unlabeled(tmp_path):
    # binary payload is float32; feed float32-exact coordinates
    rng = np.random.default_rng(6)
    ds = Dataset(rng.normal(size=(33, 5)).astype(np.float32).astype(np.float64))
    p = tmp_path / "a.pts"
    write_points(ds, p)
    back = read_points(p)
    np.testing.assert_array_equal(back.points, ds.points)
    assert back.labels is None
    assert not os.path.exists(labels_path_for(p))


def test_points_roundtrip_labeled(tmp_path):
    rng = np.random.default_rng(7)
    pts = rng.normal(size=(20, 2)).astype(np.float32).astype(np.float64)
    ds = Dataset(pts, labels=rng.integers(0, 3, size=20), class_count=3)
    p = tmp_path / "b.pts"
    write_points(ds, p)
    assert os.path.exists(labels_path_for(p))
    back = read_points(p)
    np.testing.assert_array_equal(back.points, ds.points)
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.class_count == 3


def test_points_write_is_deterministic(tmp_path):
    rng = np.random.default_rng(8)
    ds = Dataset(rng.normal(size=(10, 3)))
    write_points(ds, tmp_path / "x.pts")
    write_points(ds, tmp_path / "y.pts")
    assert (tmp_path / "x.pts").read_bytes() == (tmp_path / "y.pts").read_bytes()


def test_read_points_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.pts"
    p.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(FormatError):
        read_points(p)


def test_read_points_rejects_truncation(tmp_path):
    ds = Dataset(np.random.default_rng(9).normal(size=(6, 2)))
    p = tmp_path / "t.pts"
    write_points(ds, p)
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(FormatError):
        read_points(p)
