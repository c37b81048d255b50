import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from histlayer.metrics import (SingletonClassError, accuracy, confusion, fdr_per_class,
                               row_normalize)


def test_accuracy():
    assert accuracy([1, 2, 3], [1, 2, 3]) == 100.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    assert accuracy([1, 2, 3, 0], [1, 2, 3, 4]) == 75.0
    with pytest.raises(ValueError):
        accuracy([], [])


def test_confusion():
    labels = np.array([0, 1, 2, 2, 1])
    npt.assert_array_equal(confusion(labels, labels, 3), np.diag([1, 2, 2]))
    cm = confusion(np.zeros(5, int), labels, 3)
    assert np.count_nonzero(cm.sum(axis=0)) == 1 and cm[:, 0].sum() == 5
    assert cm.sum() == 5
    npt.assert_allclose(row_normalize(cm).sum(axis=1), [1, 1, 1])
    with pytest.raises(ValueError):
        confusion([0], [3], 3)


def fdr_direct(X, y, c, eps=1e-12):
    """Scalar re-statement: between-mean distance over summed per-dimension variances."""
    a, b = X[y == c], X[y != c]
    num = sum((a[:, j].mean() - b[:, j].mean()) ** 2 for j in range(X.shape[1]))
    den = sum(np.var(a[:, j], ddof=1) + np.var(b[:, j], ddof=1) for j in range(X.shape[1]))
    return np.log((num + eps) / (den + eps))


def test_fdr_separated_clusters_closed_form():
    rng = np.random.default_rng(0)
    # two unit-variance 2-d Gaussians 20 apart: FDR ~ 400 / (2 + 2) = 100
    X = np.vstack([rng.normal(0, 1, (4000, 2)), rng.normal([20, 0], 1, (4000, 2))])
    y = np.repeat([0, 1], 4000)
    out = fdr_per_class(X, y)
    assert out[0] == pytest.approx(np.log(100.0), abs=0.1)
    assert out[0] == pytest.approx(fdr_direct(X, y, 0), abs=1e-10)


def test_fdr_identical_classes_strongly_negative():
    X = np.random.default_rng(3).normal(size=(10, 2))
    y = np.repeat([0, 1], 10)
    out = fdr_per_class(np.vstack([X, X]), y)
    # zero mean gap leaves only eps in the numerator
    assert out[0] < np.log(1e-12) + 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_fdr_translation_invariant(seed, a, b):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 2)) + np.repeat([[0, 0], [2, 1], [0, 3]], [10, 15, 15], axis=0)
    y = np.repeat([0, 1, 2], [10, 15, 15])
    base, moved = fdr_per_class(X, y), fdr_per_class(X + [a, b], y)
    for c in base:
        assert moved[c] == pytest.approx(base[c], abs=1e-9)
        assert base[c] == pytest.approx(fdr_direct(X, y, c), abs=1e-10)


def test_fdr_singleton_class():
    with pytest.raises(SingletonClassError):
        fdr_per_class(np.zeros((3, 2)), [0, 0, 1])
