"""Residual towers, prediction heads, analytic gradients, and Adam."""

import numpy as np
import pytest

from a2cf.config import TrainConfig
from a2cf.network import (AdamState, GradientBuffer, INIT_SCALE, ModelParams,
                          adam_step, dropout_mask, init_params, phase1_loss,
                          phase1_forward_backward, predict_item_attribute,
                          predict_item_attr_batch, predict_user_attribute,
                          predict_user_attr_batch, residual_backward,
                          residual_forward, tanh_rescaled, tanh_rescaled_grad)
from conftest import central_diff_grads, worst_relative_gap

TANH_ONE_ON_FIVE = 4.5231883119115298


def small_cfg(**kw):
    base = dict(embed_dim=4, tower_depth=2, dropout=0.0)
    base.update(kw)
    return TrainConfig(**base)


def zeroed_params(cfg, n_users=3, n_items=3, n_attrs=3):
    params = init_params(n_users, n_items, n_attrs, cfg, seed=0)
    for t in params.tensors().values():
        t[...] = 0.0
    return params


# ------------------------------------------------------------------- init

def test_init_same_seed_bit_identical():
    cfg = small_cfg()
    a = init_params(5, 6, 4, cfg, seed=123)
    b = init_params(5, 6, 4, cfg, seed=123)
    for ta, tb in zip(a.tensors().values(), b.tensors().values()):
        np.testing.assert_array_equal(ta, tb)


def test_init_within_scale_and_zero_biases():
    params = init_params(8, 9, 5, small_cfg(), seed=7)
    for name, t in params.tensors().items():
        assert np.all(np.abs(t) <= INIT_SCALE), name
    assert np.all(params.user_tower_b == 0.0)
    assert np.all(params.item_tower_b == 0.0)


def test_init_different_seeds_differ():
    cfg = small_cfg()
    a = init_params(5, 6, 4, cfg, seed=1)
    b = init_params(5, 6, 4, cfg, seed=2)
    assert not np.array_equal(a.user_emb, b.user_emb)


def test_init_shapes_follow_config():
    cfg = small_cfg(embed_dim=3, tower_depth=2)
    params = init_params(4, 5, 6, cfg, seed=0)
    assert params.user_emb.shape == (4, 3)
    assert params.attr_emb.shape == (6, 3)
    assert params.user_tower_w.shape == (2, 6, 6)
    assert params.user_head.shape == (6,)
    assert params.subst_proj.shape == (6,)
    assert params.embed_dim == 3 and params.tower_depth == 2


def test_init_reduced_projection_under_ablation():
    cfg = small_cfg(embed_dim=3, subst_use_attrs=False)
    params = init_params(4, 5, 6, cfg, seed=0)
    assert params.subst_proj.shape == (3,)
    assert params.pers_proj.shape == (6,)
    cfg = small_cfg(embed_dim=3, pers_use_attrs=False)
    params = init_params(4, 5, 6, cfg, seed=0)
    assert params.pers_proj.shape == (3,)


# --------------------------------------------------------- residual tower

def test_residual_identity_with_zero_weights():
    h0 = np.random.default_rng(0).normal(size=(3, 6))
    weights = np.zeros((2, 6, 6))
    biases = np.zeros((2, 6))
    out, _ = residual_forward(h0, weights, biases)
    np.testing.assert_array_equal(out, h0)


def test_residual_identity_with_large_negative_bias():
    h0 = np.random.default_rng(1).normal(size=(4, 6))
    weights = np.zeros((2, 6, 6))
    biases = np.full((2, 6), -100.0)
    out, _ = residual_forward(h0, weights, biases)
    np.testing.assert_array_equal(out, h0)


def test_residual_two_layer_matches_hand_evaluation():
    rng = np.random.default_rng(2)
    h0 = rng.normal(size=(3, 6))
    weights = rng.normal(scale=0.5, size=(2, 6, 6))
    biases = rng.normal(scale=0.1, size=(2, 6))
    out, _ = residual_forward(h0, weights, biases)

    h = h0.copy()
    for k in range(2):
        pre = np.empty_like(h)
        for row in range(h.shape[0]):
            for j in range(6):
                pre[row, j] = float(np.dot(weights[k][j], h[row])) + biases[k][j]
        h = h + np.where(pre > 0.0, pre, 0.0)
    np.testing.assert_allclose(out, h, atol=1e-12)


def test_residual_nonfinite_activation_names_block():
    h0 = np.full((1, 4), np.inf)
    weights = np.ones((2, 4, 4))
    biases = np.zeros((2, 4))
    with pytest.raises(FloatingPointError, match="block 0"):
        residual_forward(h0, weights, biases)


def test_residual_backward_matches_finite_differences_with_masks():
    rng = np.random.default_rng(3)
    h0 = rng.normal(size=(3, 4))
    weights = rng.normal(scale=0.4, size=(2, 4, 4))
    biases = rng.normal(scale=0.1, size=(2, 4))
    masks = [dropout_mask((3, 4), 0.4, rng) for _ in range(2)]

    def loss():
        out, _ = residual_forward(h0, weights, biases, masks)
        return float(out.sum())

    out, cache = residual_forward(h0, weights, biases, masks)
    g_h0, grad_w, grad_b = residual_backward(np.ones_like(out), weights, cache)

    step = 1e-6
    for arr, grad in ((weights, grad_w), (biases, grad_b), (h0, g_h0)):
        flat, gflat = arr.ravel(), grad.ravel()
        for k in range(flat.size):
            keep = flat[k]
            flat[k] = keep + step
            hi = loss()
            flat[k] = keep - step
            lo = loss()
            flat[k] = keep
            fd = (hi - lo) / (2 * step)
            assert abs(fd - gflat[k]) < 1e-5


# ----------------------------------------------------------- rescale head

def test_tanh_rescaled_midpoint_and_unit():
    assert tanh_rescaled(0.0, 5.0) == 3.0
    assert tanh_rescaled(1.0, 5.0) == pytest.approx(TANH_ONE_ON_FIVE, abs=1e-12)


def test_tanh_rescaled_saturates_without_overflow():
    assert abs(tanh_rescaled(40.0, 5.0) - 5.0) < 1e-12
    assert abs(tanh_rescaled(-40.0, 5.0) - 1.0) < 1e-12
    assert np.isfinite(tanh_rescaled(1e6, 5.0))


def test_tanh_rescaled_odd_symmetry():
    for r in (0.1, 0.7, 2.0, 13.0):
        total = tanh_rescaled(r, 5.0) + tanh_rescaled(-r, 5.0)
        assert total == pytest.approx(6.0, abs=1e-12)


def test_tanh_rescaled_grad_matches_finite_differences():
    for r in (-2.0, -0.3, 0.0, 0.5, 1.7):
        fd = (tanh_rescaled(r + 1e-6, 5.0) - tanh_rescaled(r - 1e-6, 5.0)) / 2e-6
        assert tanh_rescaled_grad(r, 5.0) == pytest.approx(fd, abs=1e-8)


# ------------------------------------------------------------- predictors

def test_predict_zero_weights_gives_midpoint():
    params = zeroed_params(small_cfg())
    assert predict_user_attribute(params, 0, 0) == 3.0
    assert predict_item_attribute(params, 2, 1) == 3.0


def test_predict_range_over_many_random_params():
    cfg = small_cfg(embed_dim=3)
    count = 0
    for seed in range(100):
        params = init_params(4, 4, 4, cfg, seed=seed)
        for u in range(4):
            for a in range(4):
                if count >= 1000:
                    break
                x = predict_user_attribute(params, u, a)
                y = predict_item_attribute(params, u, a)
                assert 1.0 < x < 5.0
                assert 1.0 < y < 5.0
                count += 1
    assert count == 1000


def test_predict_user_attribute_hand_value():
    cfg = TrainConfig(embed_dim=2, tower_depth=1, dropout=0.0)
    params = zeroed_params(cfg, n_users=1, n_items=1, n_attrs=1)
    params.user_emb[0] = [0.1, -0.2]
    params.attr_emb[0] = [0.3, 0.05]
    params.user_tower_w[0] = [[0.5, -0.25, 0.1, 0.0],
                              [0.2, 0.3, -0.1, 0.4],
                              [-0.3, 0.1, 0.2, 0.1],
                              [0.0, -0.2, 0.15, 0.25]]
    params.user_tower_b[0] = [0.05, -0.02, 0.0, 0.1]
    params.user_head[...] = [0.4, -0.1, 0.3, 0.2]

    h0 = np.array([0.1, -0.2, 0.3, 0.05])
    z = params.user_tower_w[0] @ h0 + params.user_tower_b[0]
    h = h0 + np.maximum(z, 0.0)
    r = float(params.user_head @ h)
    expected = 2.0 * np.tanh(r) + 3.0
    assert predict_user_attribute(params, 0, 0) == pytest.approx(expected, abs=1e-12)


def test_predict_item_attribute_hand_value():
    cfg = TrainConfig(embed_dim=2, tower_depth=1, dropout=0.0)
    params = zeroed_params(cfg, n_users=1, n_items=1, n_attrs=1)
    params.item_emb[0] = [-0.15, 0.25]
    params.attr_emb[0] = [0.1, -0.3]
    params.item_tower_w[0] = np.array([[0.2, 0.1, -0.1, 0.3],
                                       [-0.4, 0.2, 0.1, 0.0],
                                       [0.1, -0.1, 0.3, 0.2],
                                       [0.25, 0.0, -0.2, 0.1]])
    params.item_tower_b[0] = [0.0, 0.05, -0.1, 0.02]
    params.item_head[...] = [-0.2, 0.3, 0.1, 0.4]

    h0 = np.array([-0.15, 0.25, 0.1, -0.3])
    z = params.item_tower_w[0] @ h0 + params.item_tower_b[0]
    h = h0 + np.maximum(z, 0.0)
    expected = 2.0 * np.tanh(float(params.item_head @ h)) + 3.0
    assert predict_item_attribute(params, 0, 0) == pytest.approx(expected, abs=1e-12)


def test_attr_embedding_shared_between_towers():
    params = init_params(3, 3, 3, small_cfg(), seed=11)
    x_before = predict_user_attribute(params, 1, 2)
    y_before = predict_item_attribute(params, 1, 2)
    params.attr_emb[2] += 0.01
    assert predict_user_attribute(params, 1, 2) != x_before
    assert predict_item_attribute(params, 1, 2) != y_before


def test_batched_prediction_matches_scalar():
    params = init_params(5, 5, 4, small_cfg(), seed=13)
    users = np.array([0, 2, 4, 1])
    attrs = np.array([3, 1, 0, 2])
    batch = predict_user_attr_batch(params, users, attrs, 5.0)
    for k, (u, a) in enumerate(zip(users, attrs)):
        assert batch[k] == pytest.approx(predict_user_attribute(params, u, a),
                                         abs=1e-12)
    batch = predict_item_attr_batch(params, users, attrs, 5.0)
    for k, (v, a) in enumerate(zip(users, attrs)):
        assert batch[k] == pytest.approx(predict_item_attribute(params, v, a),
                                         abs=1e-12)


# ----------------------------------------------------------- phase-1 loss

def test_phase1_loss_zero_on_perfect_predictions():
    params = zeroed_params(small_cfg())
    cells = (np.array([0, 1]), np.array([0, 2]), np.array([3.0, 3.0]))
    assert phase1_loss(params, cells, None) == 0.0
    assert phase1_loss(params, None, cells) == 0.0
    assert phase1_loss(params, None, None) == 0.0


def test_phase1_loss_squared_residuals():
    params = zeroed_params(small_cfg())   # every prediction is 3.0
    user_cells = (np.array([0]), np.array([0]), np.array([2.0]))
    item_cells = (np.array([1]), np.array([1]), np.array([5.0]))
    assert phase1_loss(params, user_cells, item_cells) == pytest.approx(5.0, abs=1e-12)


def test_phase1_gradients_match_finite_differences():
    # seed chosen so no relu pre-activation sits within the finite-difference
    # step of the kink (there the FD oracle itself is invalid)
    cfg = small_cfg(embed_dim=4, tower_depth=2)
    params = init_params(5, 6, 6, cfg, seed=91)
    user_cells = (np.array([0, 2, 4]), np.array([1, 3, 5]),
                  np.array([2.5, 4.0, 1.5]))
    item_cells = (np.array([1, 3]), np.array([0, 2]), np.array([3.5, 2.0]))
    loss, analytic = phase1_forward_backward(params, user_cells, item_cells,
                                             rating_max=5.0)
    assert loss == pytest.approx(phase1_loss(params, user_cells, item_cells),
                                 abs=1e-12)
    numeric = central_diff_grads(
        params, lambda: phase1_loss(params, user_cells, item_cells))
    assert worst_relative_gap(analytic, numeric) < 1e-4


def test_phase1_gradients_zero_off_path():
    cfg = small_cfg()
    params = init_params(5, 6, 6, cfg, seed=22)
    user_cells = (np.array([1]), np.array([2]), np.array([4.0]))
    _, grads = phase1_forward_backward(params, user_cells, None, rating_max=5.0)
    assert np.all(grads.user_emb[0] == 0.0)
    assert np.all(grads.user_emb[2:] == 0.0)
    assert np.any(grads.user_emb[1] != 0.0)
    assert np.all(grads.item_emb == 0.0)
    assert np.all(grads.item_tower_w == 0.0)
    assert np.all(grads.item_head == 0.0)
    assert np.all(grads.attr_emb[0] == 0.0)
    assert np.any(grads.attr_emb[2] != 0.0)
    assert np.all(grads.subst_proj == 0.0) and np.all(grads.pers_proj == 0.0)


def test_phase1_gradients_scale_linearly():
    cfg = small_cfg()
    params = init_params(4, 4, 4, cfg, seed=23)
    cells = (np.array([0, 3]), np.array([1, 2]), np.array([1.5, 4.5]))
    _, once = phase1_forward_backward(params, cells, None, rating_max=5.0)
    doubled = tuple(np.concatenate([arr, arr]) for arr in cells)
    _, twice = phase1_forward_backward(params, doubled, None, rating_max=5.0)
    for g1, g2 in zip(once.tensors().values(), twice.tensors().values()):
        np.testing.assert_allclose(g2, 2.0 * g1, atol=1e-12)


def test_phase1_shared_attr_grads_accumulate_both_towers():
    cfg = small_cfg()
    params = init_params(4, 4, 4, cfg, seed=24)
    user_cells = (np.array([0]), np.array([1]), np.array([2.0]))
    item_cells = (np.array([2]), np.array([1]), np.array([4.0]))
    _, g_user = phase1_forward_backward(params, user_cells, None, rating_max=5.0)
    _, g_item = phase1_forward_backward(params, None, item_cells, rating_max=5.0)
    _, g_both = phase1_forward_backward(params, user_cells, item_cells,
                                        rating_max=5.0)
    np.testing.assert_allclose(g_both.attr_emb,
                               g_user.attr_emb + g_item.attr_emb, atol=1e-12)


def test_phase1_dropout_requires_rng():
    params = init_params(3, 3, 3, small_cfg(), seed=25)
    cells = (np.array([0]), np.array([0]), np.array([3.0]))
    with pytest.raises(ValueError, match="rng"):
        phase1_forward_backward(params, cells, None, rating_max=5.0,
                                dropout=0.4)


# ------------------------------------------------------------------- adam

def test_adam_zero_gradient_leaves_params():
    params = init_params(3, 3, 3, small_cfg(), seed=31)
    before = {k: t.copy() for k, t in params.tensors().items()}
    state = AdamState.zeros_like(params)
    adam_step(params, GradientBuffer.zeros_like(params), state, lr=0.01)
    for k, t in params.tensors().items():
        np.testing.assert_array_equal(t, before[k])


def test_adam_first_step_magnitude_is_learning_rate():
    params = init_params(2, 2, 2, small_cfg(embed_dim=2), seed=32)
    before = params.user_emb.copy()
    grads = GradientBuffer.zeros_like(params)
    grads.user_emb[...] = np.array([[0.3, -0.7], [1.2, -0.05]])
    state = AdamState.zeros_like(params)
    adam_step(params, grads, state, lr=1e-3)
    delta = params.user_emb - before
    np.testing.assert_allclose(np.abs(delta), 1e-3, rtol=1e-5)
    assert np.all(np.sign(delta) == -np.sign(grads.user_emb))
    assert state.step == 1


def test_adam_skips_nonfinite_gradients():
    params = init_params(2, 2, 2, small_cfg(embed_dim=2), seed=33)
    before = params.user_emb.copy()
    grads = GradientBuffer.zeros_like(params)
    grads.user_emb[0, 0] = np.nan
    state = AdamState.zeros_like(params)
    adam_step(params, grads, state, lr=0.1)
    np.testing.assert_array_equal(params.user_emb, before)
    assert state.step == 0


def test_adam_converges_on_quadratic():
    cfg = TrainConfig(embed_dim=2, tower_depth=1, dropout=0.0)
    params = zeroed_params(cfg, n_users=1, n_items=1, n_attrs=1)
    target = np.array([1.5, -0.7])
    state = AdamState.zeros_like(params)
    for _ in range(200):
        grads = GradientBuffer.zeros_like(params)
        grads.user_emb[0] = 2.0 * (params.user_emb[0] - target)
        adam_step(params, grads, state, lr=0.05)
    np.testing.assert_allclose(params.user_emb[0], target, atol=1e-3)


# ---------------------------------------------------------------- dropout

def test_dropout_rate_zero_is_identity_mask():
    mask = dropout_mask((4, 5), 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(mask, np.ones((4, 5)))


def test_dropout_mask_values_and_frequencies():
    rng = np.random.default_rng(41)
    mask = dropout_mask((100_000,), 0.4, rng)
    np.testing.assert_allclose(np.unique(mask), [0.0, 1.0 / 0.6], atol=1e-12)
    zero_frac = float((mask == 0.0).mean())
    assert abs(zero_frac - 0.4) < 0.01
    assert abs(mask.mean() - 1.0) < 0.01


def test_dropout_mask_rejects_bad_rate():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="dropout rate"):
        dropout_mask((3,), 1.0, rng)
    with pytest.raises(ValueError):
        dropout_mask((3,), -0.1, rng)
