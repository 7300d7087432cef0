import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oneshot_retouch.patches import assemble_patches, coverage, extract_patches

bands = st.integers(3, 9).flatmap(
    lambda h: st.integers(3, 9).flatmap(
        lambda w: arrays(np.float64, (h, w), elements=st.floats(-2, 2))))


def test_single_patch():
    x = np.arange(9.0).reshape(3, 3)
    ps = extract_patches(x)
    assert ps.n == 1 and ps.grid == (1, 1)
    np.testing.assert_array_equal(ps.patches[0], x.ravel())


def test_counts():
    x = np.random.default_rng(0).random((5, 5))
    assert extract_patches(x, padding="valid").n == 9
    rep = extract_patches(x, padding="replicate")
    assert rep.n == 25 and rep.grid == (5, 5)
    assert extract_patches(np.zeros((6, 8)), padding="valid").grid == (4, 6)


def test_row_major_order():
    x = np.arange(20.0).reshape(4, 5)
    ps = extract_patches(x)
    np.testing.assert_array_equal(ps.patches[1], x[0:3, 1:4].ravel())
    np.testing.assert_array_equal(ps.patches[3], x[1:4, 0:3].ravel())


def test_replicate_border_patch():
    x = np.arange(16.0).reshape(4, 4)
    ps = extract_patches(x, padding="replicate")
    np.testing.assert_array_equal(ps.patches[0].reshape(3, 3), np.pad(x, 1, mode="edge")[0:3, 0:3])


def test_constant_band():
    ps = extract_patches(np.full((6, 7), 0.25), padding="replicate")
    assert np.all(ps.patches == 0.25)


def test_errors():
    with pytest.raises(ValueError):
        extract_patches(np.zeros((5, 5)), patch_size=2)
    with pytest.raises(ValueError):
        extract_patches(np.zeros((2, 5)))
    with pytest.raises(ValueError):
        extract_patches(np.zeros((5, 5)), stride=0)
    ps = extract_patches(np.zeros((5, 5)))
    with pytest.raises(ValueError):
        assemble_patches(ps.with_patches(ps.patches[:-1]))


def test_all_ones_assembly():
    ps = extract_patches(np.zeros((3, 3)))
    np.testing.assert_array_equal(assemble_patches(ps.with_patches(np.ones((1, 9)))), np.ones((3, 3)))


def test_coverage_analytic():
    cov = coverage(extract_patches(np.zeros((5, 5))))
    # per axis, pixel i is covered by min(i, 4 - i, 2) + 1 windows
    per_axis = np.array([1, 2, 3, 2, 1])
    np.testing.assert_array_equal(cov, np.outer(per_axis, per_axis))
    assert set(np.unique(cov)) == {1, 2, 3, 4, 6, 9}
    assert np.all(coverage(extract_patches(np.zeros((5, 5)), padding="replicate")) >= 4)


def _dense_oracle(patches, h, w, p=3):
    acc = np.zeros((h, w))
    cnt = np.zeros((h, w))
    cols = w - p + 1
    for i, v in enumerate(patches):
        r, c = divmod(i, cols)
        acc[r:r + p, c:c + p] += v.reshape(p, p)
        cnt[r:r + p, c:c + p] += 1
    return acc / cnt, cnt


@pytest.mark.parametrize("patch_idx", range(9))
@pytest.mark.parametrize("cell", [0, 4, 8])
def test_perturbation_spreads_by_coverage(patch_idx, cell):
    x = np.random.default_rng(1).random((5, 5))
    ps = extract_patches(x)
    pert = ps.patches.copy()
    pert[patch_idx, cell] += 9.0
    out = assemble_patches(ps.with_patches(pert))
    oracle, cnt = _dense_oracle(pert, 5, 5)
    np.testing.assert_allclose(out, oracle, atol=1e-12)
    r, c = divmod(patch_idx, 3)
    py, px = r + cell // 3, c + cell % 3
    assert out[py, px] - x[py, px] == pytest.approx(9.0 / cnt[py, px], abs=1e-12)


@pytest.mark.parametrize("padding", ["valid", "replicate"])
@settings(max_examples=30, deadline=None)
@given(x=bands)
def test_round_trip(padding, x):
    assert np.abs(assemble_patches(extract_patches(x, padding=padding)) - x).max() <= 1e-12


@settings(max_examples=30, deadline=None)
@given(x=bands, a=st.floats(-3, 3), seed=st.integers(0, 1000))
def test_assemble_linear(x, a, seed):
    ps = extract_patches(x, padding="replicate")
    other = np.random.default_rng(seed).normal(size=ps.patches.shape)
    lhs = assemble_patches(ps.with_patches(a * ps.patches + other))
    rhs = a * assemble_patches(ps) + assemble_patches(ps.with_patches(other))
    assert np.abs(lhs - rhs).max() < 1e-10


def test_stride_two_leaves_gaps_at_zero():
    ps = extract_patches(np.ones((6, 6)), stride=2)
    out = assemble_patches(ps)
    assert ps.grid == (2, 2)
    assert out[5, 5] == 0.0 and out[0, 0] == 1.0
