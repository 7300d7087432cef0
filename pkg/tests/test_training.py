import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oneshot_retouch.blend import BandMap, RegressorMap, WeightField, apply_model, identity_band_map
from oneshot_retouch.image_io import ImageBuf
from oneshot_retouch.metrics import psnr
from oneshot_retouch.pyramid import decompose, reconstruct
from oneshot_retouch.training import (
    AdamState,
    MisalignedPairError,
    PatchPairSet,
    TrainConfig,
    adam_step,
    blend_loss_and_grads,
    build_dataset,
    expected_param_count,
    grad_check,
    l1_loss_and_grad,
    lr_at,
    numerical_gradient,
    regressor_loss_and_grads,
    train,
    train_band,
)


def small_map(rng, K=2, H=4):
    return BandMap(np.eye(9)[None] + 0.3 * rng.normal(size=(K, 9, 9)),
                   WeightField.init([9, H, H, K], rng))


def test_config_validation():
    for bad in (dict(lr=0), dict(decay=0), dict(decay=1.5), dict(K=0), dict(batch=0),
                dict(channel_mode="x"), dict(baseline="x"), dict(patch_size=4), dict(scheme="x")):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_config_hash_stable():
    assert TrainConfig().config_hash() == TrainConfig().config_hash()
    assert TrainConfig().config_hash() != TrainConfig(seed=1).config_hash()


def test_lr_decay():
    assert lr_at(TrainConfig(), 10) == pytest.approx(1e-2 * 0.96 ** 10, rel=1e-15)
    assert lr_at(TrainConfig(), 0) == 1e-2


def test_dataset_counts():
    rng = np.random.default_rng(0)
    img = ImageBuf(rng.random((64, 64)))
    sets = build_dataset(img, img, TrainConfig(n_levels=1))[0]
    assert len(sets) == 2
    # n_L = 1: both bands at scale 1
    assert [s.n for s in sets] == [62 * 62, 62 * 62]
    sets = build_dataset(img, img, TrainConfig(n_levels=3))[0]
    assert [s.n for s in sets] == [62 * 62, 62 * 62, 30 * 30, 14 * 14]
    for s in sets:
        np.testing.assert_array_equal(s.X, s.Y)


def test_dataset_constant_pair_is_zero():
    sets = build_dataset(ImageBuf(np.full((64, 64), 0.3)), ImageBuf(np.full((64, 64), 0.7)), TrainConfig(n_levels=2))
    assert all(np.abs(s.X).max() < 1e-14 and np.abs(s.Y).max() < 1e-14 for s in sets[0])


def test_dataset_misaligned():
    with pytest.raises(MisalignedPairError, match="pixel-aligned"):
        build_dataset(ImageBuf(np.zeros((64, 64))), ImageBuf(np.zeros((64, 65))), TrainConfig())


def test_dataset_per_channel():
    rng = np.random.default_rng(1)
    img = ImageBuf(rng.random((32, 32, 3)))
    assert len(build_dataset(img, img, TrainConfig(n_levels=2, channel_mode="per_channel"))) == 3
    assert len(build_dataset(img, img, TrainConfig(n_levels=2))) == 1


def test_l1_examples():
    loss, g = l1_loss_and_grad(np.ones(9), np.ones(9))
    assert loss == 0 and not g.any()
    r = np.zeros(9)
    r[:2] = [1, -1]
    loss, g = l1_loss_and_grad(r, np.zeros(9))
    assert loss == pytest.approx(2 / 9)
    np.testing.assert_allclose(g, r / 9)
    with pytest.raises(ValueError):
        l1_loss_and_grad(np.zeros(9), np.zeros(8))


def test_l1_finite_differences(rng):
    p, t = rng.normal(size=9), rng.normal(size=9)
    _, g = l1_loss_and_grad(p, t)
    h = 1e-6
    for i in range(9):
        e = np.zeros(9)
        e[i] = h
        num = (l1_loss_and_grad(p + e, t)[0] - l1_loss_and_grad(p - e, t)[0]) / (2 * h)
        assert abs(num - g[i]) <= 1e-6 * abs(g[i])


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 8))
def test_grad_check_random_instances(seed, n):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 9))
    Y = rng.normal(size=(n, 9))
    assert grad_check(small_map(rng), X, Y) < 1e-4


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_grad_check_regressor(seed):
    rng = np.random.default_rng(seed)
    rm = RegressorMap(WeightField.init([9, 4, 4, 9], rng))
    assert grad_check(rm, rng.normal(size=(6, 9)), rng.normal(size=(6, 9))) < 1e-4


def test_single_patch_finite_differences(rng):
    bm = small_map(rng)
    X, Y = rng.normal(size=(1, 9)), rng.normal(size=(1, 9))
    _, analytic = blend_loss_and_grads(bm, X, Y)
    numeric = numerical_gradient(bm, X, Y, 1e-6, skip_kinks=True)
    for a, n in zip(analytic, numeric):
        ok = ~np.isnan(n)
        np.testing.assert_allclose(a[ok], n[ok], rtol=1e-5, atol=1e-9)


def test_zero_gradient_at_identity(rng):
    bm = identity_band_map(2, 9, 4, rng)
    X = rng.normal(size=(8, 9))
    loss, grads = blend_loss_and_grads(bm, X, X.copy())
    assert loss == 0
    assert all(not g.any() for g in grads)
    numeric = numerical_gradient(bm, X, X.copy(), 1e-6)
    assert max(np.abs(n).max() for n in numeric) < 1e-6


def test_matrix_gradient_scales_with_frozen_weights(rng):
    fld = WeightField.zeros([9, 2, 2, 2])
    fld.b3[:] = [np.log(3.0), 0.0]  # weights (0.75, 0.25)
    bm = BandMap(rng.normal(size=(2, 9, 9)), fld)
    _, grads = blend_loss_and_grads(bm, rng.normal(size=(5, 9)), rng.normal(size=(5, 9)))
    np.testing.assert_allclose(grads[0][0], 3.0 * grads[0][1], atol=1e-15)


def test_finite_difference_error_is_second_order(rng):
    # smooth loss (no kinks) by fixing the l1 sign pattern far from zero
    bm = small_map(rng)
    X = rng.normal(size=(4, 9))
    Y = bm(X) + 5.0
    _, analytic = blend_loss_and_grads(bm, X, Y)
    errs = []
    for h in (1e-2, 1e-3):
        num = numerical_gradient(bm, X, Y, h)
        errs.append(max(np.abs(a - n).max() for a, n in zip(analytic, num)))
    # ideal ratio is 100 for O(h^2)
    assert errs[0] / errs[1] > 30


def test_adam_zero_gradient():
    p = [np.array([1.0, -2.0])]
    st_ = AdamState.zeros_like(p)
    for _ in range(5):
        adam_step(p, [np.zeros(2)], st_, 1e-2)
    np.testing.assert_array_equal(p[0], [1.0, -2.0])
    assert st_.t == 5


def test_adam_first_step_by_hand():
    g = np.array([0.5, -3.0, 1e-3])
    p = [np.zeros(3)]
    adam_step(p, [g], AdamState.zeros_like(p), 1e-2)
    # bias-corrected m = g, v = g^2, so the step is lr * g / (|g| + eps)
    np.testing.assert_allclose(p[0], -1e-2 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_shape_mismatch():
    p = [np.zeros(3)]
    with pytest.raises(ValueError):
        adam_step(p, [np.zeros(4)], AdamState.zeros_like(p), 1e-2)


def test_train_band_empty():
    with pytest.raises(ValueError):
        train_band(PatchPairSet(np.zeros((0, 9)), np.zeros((0, 9)), 0), TrainConfig(K=1))


def _patches(rng, n=2000):
    return rng.normal(scale=0.1, size=(n, 9))


def test_identity_pair_k1():
    X = _patches(np.random.default_rng(2))
    res = train_band(PatchPairSet(X, X.copy(), 0), TrainConfig(K=1, hidden=4, epochs=60, batch=256))
    assert res.final_loss < 1e-3
    off = res.band_map.A[0] - np.diag(np.diag(res.band_map.A[0]))
    assert np.abs(off).max() < 0.05


@pytest.mark.parametrize("K", [1, 4, 16])
def test_identity_pair_any_k(K):
    X = _patches(np.random.default_rng(3))
    res = train_band(PatchPairSet(X, X.copy(), 0), TrainConfig(K=K, hidden=4, epochs=60, batch=256))
    assert res.final_loss < 1e-3


def test_half_scale_pair():
    X = _patches(np.random.default_rng(4))
    res = train_band(PatchPairSet(X, 0.5 * X, 0), TrainConfig(K=1, hidden=4, epochs=60, batch=256))
    assert res.final_loss < 1e-3


def test_recovers_linear_map():
    rng = np.random.default_rng(5)
    B = rng.normal(scale=0.3, size=(9, 9))
    X = rng.normal(size=(4000, 9))
    res = train_band(PatchPairSet(X, X @ B.T, 0), TrainConfig(K=1, hidden=4, epochs=120, batch=256))
    assert np.abs(res.band_map.A[0] - B).max() < 0.01


def test_train_deterministic_and_logged():
    rng = np.random.default_rng(6)
    b = ImageBuf(rng.random((64, 64)))
    a = ImageBuf(np.clip(b.data * 0.8 + 0.1, 0, 1))
    cfg = TrainConfig(K=3, hidden=4, epochs=3, batch=512, n_levels=2)
    s1, s2 = io.StringIO(), io.StringIO()
    m1, r1 = train(b, a, cfg, s1)
    m2, r2 = train(b, a, cfg, s2)
    assert s1.getvalue() == s2.getvalue()
    lines = s1.getvalue().splitlines()
    assert len(lines) == 3 * 3
    assert lines[0].startswith("epoch=0 channel=0 band=0 lr=1.000000e-02 loss=")
    for x, y in zip(m1.band_maps[0], m2.band_maps[0]):
        for p, q in zip(x.params(), y.params()):
            assert np.array_equal(p, q)
    assert m1.config_hash == cfg.config_hash()


def test_identity_pair_model_is_round_trip():
    rng = np.random.default_rng(8)
    x = np.clip(reconstruct(decompose(rng.random((64, 64)), 2)), 0, 1)
    img = ImageBuf.from_array(x)
    model, _ = train(img, img, TrainConfig(K=2, hidden=4, epochs=40, batch=1024, n_levels=2))
    rt = np.clip(reconstruct(decompose(x, 2)), 0, 1)
    assert psnr(apply_model(model, img).data[:, :, 0], rt) > 40


def test_grayscale_per_channel_falls_back():
    img = ImageBuf(np.random.default_rng(9).random((32, 32)))
    model, _ = train(img, img, TrainConfig(K=1, hidden=2, epochs=1, n_levels=2, channel_mode="per_channel"))
    assert model.channel_mode == "luma_only" and len(model.band_maps) == 1


def test_regressor_training_reduces_loss():
    rng = np.random.default_rng(10)
    X = _patches(rng)
    res = train_band(PatchPairSet(X, 0.5 * X, 0), TrainConfig(baseline="regressor", hidden=8, epochs=30, batch=256))
    assert res.losses[-1] < res.losses[0]


def test_expected_param_count():
    cfg = TrainConfig()
    per_band = 256 * 81 + (9 * 32 + 32) + (32 * 32 + 32) + (32 * 256 + 256)
    assert expected_param_count(cfg) == 6 * per_band == 183_360
    assert expected_param_count(cfg, 3) == 3 * 183_360
    assert expected_param_count(TrainConfig(baseline="regressor")) == 6 * (320 + 1056 + 297)
