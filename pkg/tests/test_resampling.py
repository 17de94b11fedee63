import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glucolens import errors
from glucolens.resampling import AdasynConfig, AugmentConfig, adasyn_balance, gaussian_augment


def on_some_segment(s, points, tol=1e-9):
    """Brute force: is ``s`` on a segment between two of ``points``?"""
    for a in points:
        for b in points:
            d = b - a
            dd = d @ d
            lam = 0.0 if dd == 0 else float((s - a) @ d / dd)
            if -tol <= lam <= 1 + tol and np.max(np.abs(a + lam * d - s)) <= tol:
                return True
    return False


def scaled(n, p, seed):
    X = np.random.default_rng(seed).normal(size=(n, p))
    return (X - X.mean(0)) / X.std(0)


def test_augment_sigma_zero_copies_identical():
    X = scaled(10, 3, 0)
    out, y, syn = gaussian_augment(X, np.arange(10.0), AugmentConfig(sigma=0.0, factor=2))
    assert out.shape == (30, 3)
    np.testing.assert_array_equal(out[10:12], np.repeat(X[:1], 2, axis=0))
    assert syn.sum() == 20


def test_augment_size_and_targets():
    X = scaled(10, 4, 1)
    y = np.arange(10.0)
    out, y_out, syn = gaussian_augment(X, y, AugmentConfig(factor=1, seed=3))
    assert out.shape == (20, 4)
    np.testing.assert_array_equal(out[:10], X)
    assert sorted(y_out) == sorted(np.r_[y, y])


@pytest.mark.parametrize("factor", [1, 3])
def test_augment_mean_statistical(factor):
    X = scaled(40, 5, 2)
    sigma = 0.3
    n = len(X)
    for seed in range(100):
        out, _, _ = gaussian_augment(X, None, AugmentConfig(sigma=sigma, factor=factor, seed=seed))
        dev = np.abs(out.mean(0) - X.mean(0))
        assert np.all(dev <= 4 * sigma / np.sqrt(n * factor))


def test_augment_deterministic_and_row_streams():
    X = scaled(12, 3, 4)
    a = gaussian_augment(X, None, AugmentConfig(seed=9))[0]
    b = gaussian_augment(X, None, AugmentConfig(seed=9))[0]
    assert a.tobytes() == b.tobytes()
    # noise for a row depends on (seed, row index) only
    c = gaussian_augment(X[:6], None, AugmentConfig(seed=9), allow_unscaled=True)[0]
    np.testing.assert_array_equal(c[6:], a[12:18])


def test_augment_rejects_unscaled():
    X = np.random.default_rng(0).normal(100, 10, size=(10, 2))
    with pytest.raises(errors.UnscaledData):
        gaussian_augment(X, None, AugmentConfig())
    gaussian_augment(X, None, AugmentConfig(), allow_unscaled=True)


def test_adasyn_balanced_unchanged():
    X = scaled(10, 2, 0)
    y = np.r_[np.zeros(5), np.ones(5)]
    out, y2, syn = adasyn_balance(X, y, AdasynConfig())
    np.testing.assert_array_equal(out, X)
    assert not syn.any()


def test_adasyn_counts_5_vs_20():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 1, (20, 3)), rng.normal(1.0, 1, (5, 3))])
    y = np.r_[np.zeros(20), np.ones(5)]
    out, y2, syn = adasyn_balance(X, y, AdasynConfig(k_neighbors=5, beta=1.0, seed=1))
    assert abs(syn.sum() - 15) <= 1
    assert (y2 == 1).sum() == (y2 == 0).sum()


def test_adasyn_errors():
    with pytest.raises(errors.SingleClass):
        adasyn_balance(np.zeros((3, 2)), np.zeros(3), AdasynConfig())
    with pytest.raises(errors.EmptyDataset):
        adasyn_balance(np.zeros((0, 2)), np.zeros(0), AdasynConfig())


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(13, 40), st.integers(1, 4), st.integers(1, 7),
       st.floats(0.2, 1.0), st.integers(0, 2**32 - 1))
def test_adasyn_properties(n_min, n_maj, p, k, beta, seed):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0, 1, (n_maj, p)), rng.normal(0.5, 1, (n_min, p))])
    y = np.r_[np.zeros(n_maj), np.ones(n_min)]
    cfg = AdasynConfig(k_neighbors=k, beta=beta, seed=seed)
    out, y2, syn = adasyn_balance(X, y, cfg)
    np.testing.assert_array_equal(out[: len(X)], X)
    np.testing.assert_array_equal(y2[: len(y)], y)
    assert syn.sum() == int(np.floor((n_maj - n_min) * beta + 0.5))
    assert np.all(y2[syn] == 1)
    if beta == 1.0:
        assert abs((y2 == 0).sum() - (y2 == 1).sum()) <= k
    minority = X[y == 1]
    for s in out[syn][:10]:
        assert on_some_segment(s, minority)
    again = adasyn_balance(X, y, cfg)[0]
    assert again.tobytes() == out.tobytes()
