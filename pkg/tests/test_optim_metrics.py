"""Optimizer update rule and the rank metric."""

import numpy as np
import pytest
from scipy.stats import rankdata

from pixood.metrics import auroc
from pixood.optim import AdamW


def test_adamw_first_step_matches_closed_form():
    rng = np.random.default_rng(70)
    p = rng.normal(size=(3, 2))
    g = rng.normal(size=(3, 2))
    start = p.copy()
    opt = AdamW([p], lr=0.01, betas=(0.9, 0.999), eps=1e-8)
    opt.step([g])
    # bias correction makes the first step lr * g / (|g| + eps)
    expected = start - 0.01 * g / (np.abs(g) + 1e-8)
    np.testing.assert_allclose(p, expected, rtol=1e-9)


def test_adamw_matches_hand_rolled_two_steps():
    rng = np.random.default_rng(71)
    p = rng.normal(size=4)
    grads = [rng.normal(size=4) for _ in range(2)]
    ref = p.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    opt = AdamW([p], lr=0.05)
    for t, g in enumerate(grads, start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.05 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        opt.step([g])
    np.testing.assert_allclose(p, ref, rtol=1e-12)


def test_adamw_weight_decay_is_decoupled():
    p = np.array([2.0, -4.0])
    opt = AdamW([p], lr=0.1, weight_decay=0.01)
    opt.step([np.zeros(2)])
    # zero gradient: only the decay term moves the parameters
    np.testing.assert_allclose(p, np.array([2.0, -4.0]) * (1 - 0.1 * 0.01), rtol=1e-12)


def test_adamw_reset_rows_clears_momentum():
    p = np.zeros((3, 2))
    opt = AdamW([p], lr=0.1)
    opt.step([np.ones((3, 2))])
    opt.reset_rows(0, [1])
    np.testing.assert_array_equal(opt.m[0][1], 0.0)
    np.testing.assert_array_equal(opt.v[0][1], 0.0)
    assert np.all(opt.m[0][0] != 0.0)


def test_adamw_lr_override():
    p = np.array([1.0])
    q = np.array([1.0])
    a, b = AdamW([p], lr=0.5), AdamW([q], lr=0.001)
    g = np.array([0.3])
    a.step([g], lr=0.001)
    b.step([g])
    np.testing.assert_array_equal(p, q)


def _rank_auroc(pos, neg):
    """Mann-Whitney form: mean rank of positives among all scores."""
    ranks = rankdata(np.concatenate([pos, neg]))
    n1, n0 = len(pos), len(neg)
    u = ranks[:n1].sum() - n1 * (n1 + 1) / 2
    return u / (n1 * n0)


def test_auroc_extremes():
    assert auroc([2.0, 3.0], [0.0, 1.0]) == 1.0
    assert auroc([0.0, 1.0], [2.0, 3.0]) == 0.0
    np.testing.assert_allclose(auroc([1.0, 1.0], [1.0, 1.0]), 0.5, rtol=1e-12)


def test_auroc_matches_rank_oracle():
    rng = np.random.default_rng(72)
    for _ in range(20):
        pos = rng.normal(loc=1.0, size=rng.integers(5, 60))
        neg = rng.normal(loc=0.0, size=rng.integers(5, 60))
        np.testing.assert_allclose(auroc(pos, neg), _rank_auroc(pos, neg), rtol=1e-12)


def test_auroc_matches_rank_oracle_with_ties():
    rng = np.random.default_rng(73)
    for _ in range(20):
        pos = rng.integers(0, 4, size=30).astype(float)
        neg = rng.integers(0, 4, size=25).astype(float)
        np.testing.assert_allclose(auroc(pos, neg), _rank_auroc(pos, neg), rtol=1e-12)


def test_auroc_rejects_empty():
    with pytest.raises(ValueError):
        auroc([], [1.0])
    with pytest.raises(ValueError):
        auroc([1.0], [])
