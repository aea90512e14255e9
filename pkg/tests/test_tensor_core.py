import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import mode_product_loops, unfold_loops
from timecapsule.tensor_core import as_tensor3, fold, mode_product, unfold

shapes = st.tuples(st.integers(1, 5), st.integers(1, 6), st.integers(1, 7))
modes = st.sampled_from([1, 2, 3])


def test_unfold_mode3_shape():
    t = np.arange(24.0).reshape(2, 3, 4)
    assert unfold(t, 3).shape == (4, 6)


@pytest.mark.parametrize("mode", [1, 2, 3])
def test_singleton(mode):
    t = np.full((1, 1, 1), 5.0)
    np.testing.assert_array_equal(unfold(t, mode), [[5.0]])
    np.testing.assert_array_equal(fold(np.array([[7.0]]), mode, (1, 1, 1)), np.full((1, 1, 1), 7.0))


def test_unfold_mode2_entry_placement():
    t = np.arange(24.0).reshape(2, 3, 4)
    m = unfold(t, 2)
    np.testing.assert_array_equal(m, unfold_loops(t, 2))
    for j in range(3):
        assert set(m[j]) == set(t[:, j, :].ravel())


def test_fold_mode3_rebuilds_oracle_tensor():
    t = np.arange(24.0).reshape(2, 3, 4)
    np.testing.assert_array_equal(fold(unfold_loops(t, 3), 3, (2, 3, 4)), t)


def test_roundtrip_random():
    t = np.random.default_rng(0).standard_normal((3, 4, 5))
    np.testing.assert_array_equal(fold(unfold(t, 1), 1, t.shape), t)


def test_mode_product_shape():
    t = np.zeros((2, 3, 4))
    assert mode_product(t, np.ones((5, 3)), 2).shape == (2, 5, 4)


def test_mode_product_sums_slices():
    t = np.random.default_rng(1).standard_normal((2, 2, 2))
    out = mode_product(t, np.array([[1.0, 1.0]]), 3)
    np.testing.assert_allclose(out, mode_product_loops(t, np.array([[1.0, 1.0]]), 3), atol=1e-12)
    np.testing.assert_allclose(out[..., 0], t[..., 0] + t[..., 1], atol=1e-15)


@pytest.mark.parametrize("mode", [1, 2, 3])
def test_identity_factor(mode):
    t = np.random.default_rng(2).standard_normal((3, 4, 5))
    np.testing.assert_array_equal(mode_product(t, np.eye(t.shape[mode - 1]), mode), t)


def test_errors():
    t = np.zeros((2, 3, 4))
    with pytest.raises(ValueError):
        unfold(t, 0)
    with pytest.raises(ValueError):
        fold(np.zeros((4, 5)), 3, (2, 3, 4))
    with pytest.raises(ValueError):
        mode_product(t, np.ones((2, 2)), 2)
    with pytest.raises(ValueError):
        as_tensor3(np.full((1, 1, 1), np.nan))


@settings(max_examples=60, deadline=None)
@given(shape=shapes, mode=modes, seed=st.integers(0, 2**16))
def test_roundtrip_property(shape, mode, seed):
    t = np.random.default_rng(seed).standard_normal(shape)
    np.testing.assert_array_equal(fold(unfold(t, mode), mode, shape), t)
    np.testing.assert_array_equal(unfold(t, mode), unfold_loops(t, mode))


@settings(max_examples=60, deadline=None)
@given(shape=shapes, mode=modes, rows=st.integers(1, 6), rows2=st.integers(1, 6),
       seed=st.integers(0, 2**16))
def test_product_laws(shape, mode, rows, rows2, seed):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal(shape)
    a = rng.standard_normal((rows, shape[mode - 1]))
    b = rng.standard_normal((rows2, rows))
    out = mode_product(t, a, mode)
    expected_shape = list(shape)
    expected_shape[mode - 1] = rows
    assert out.shape == tuple(expected_shape)
    assert np.max(np.abs(out - mode_product_loops(t, a, mode))) < 1e-12
    lhs = mode_product(out, b, mode)
    rhs = mode_product(t, b @ a, mode)
    assert np.max(np.abs(lhs - rhs)) < 1e-12
