import numpy as np
import pytest

from helpers import FD_TOL, central_diff, fd_against, max_rel_err, small_network
from protoseg.cloud import PointCloud, synth_scene
from protoseg.errors import DataError
from protoseg.network import (
    MomentumState,
    backward,
    broadcast_superpoints,
    flatten_params,
    forward,
    init_network,
    input_features,
    log_softmax,
    n_input_channels,
    optimizer_step,
    pool_superpoints,
    softmax,
    unflatten_params,
)


def test_forward_shapes_and_unit_norm():
    params = small_network(0)
    x = np.random.default_rng(1).normal(size=(12, 6))
    features, logits, cache = forward(x, params)
    assert features.shape == (12, 8)
    assert logits.shape == (12, 5)
    assert np.allclose(np.linalg.norm(features, axis=1), 1.0, atol=1e-12)
    assert cache.logit_scale == 1.0


def test_forward_logit_scale_scales_linearly():
    params = small_network(2)
    x = np.random.default_rng(3).normal(size=(6, 6))
    _, base, _ = forward(x, params)
    _, scaled, _ = forward(x, params, logit_scale=10.0)
    bias_part = params.head_bias[None, :]
    assert np.allclose(scaled, 10.0 * (base - bias_part) + 10.0 * bias_part)
    assert np.allclose(scaled, 10.0 * base)


def test_forward_zero_norm_row_passes_through():
    params = small_network(4)
    # zero the last linear layer's bias and feed zero input through zeroed weights
    for w in params.weights:
        w[:] = 0.0
    for b in params.biases:
        b[:] = 0.0
    x = np.zeros((3, 6))
    features, _, _ = forward(x, params)
    assert np.array_equal(features, np.zeros((3, 8)))


def test_init_network_deterministic_and_sized():
    a = init_network(6, (7, 9), 8, 5, seed=3)
    b = init_network(6, (7, 9), 8, 5, seed=3)
    assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))
    assert a.weights[0].shape == (6, 7)
    assert a.weights[1].shape == (7, 9)
    assert a.weights[2].shape == (9, 8)
    assert a.head_weight.shape == (8, 5)
    assert a.n_features == 8 and a.n_primitives == 5
    c = init_network(6, (7, 9), 8, 5, seed=4)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_backward_matches_finite_differences():
    # scalar probe: s = sum(w_f * features) + sum(w_l * logits) exercises
    # both gradient streams, including their interaction at the head
    for seed in range(8):
        rng = np.random.default_rng(seed)
        params = small_network(seed)
        x = rng.normal(size=(5, 6))
        w_f = rng.normal(size=(5, 8))
        w_l = rng.normal(size=(5, 5))
        scale = float(rng.uniform(0.5, 10.0))

        features, logits, cache = forward(x, params, scale)
        grads = backward(params, cache, w_l, w_f)

        def f(vec):
            p = unflatten_params(vec, params)
            feats, lgts, _ = forward(x, p, scale)
            return float((w_f * feats).sum() + (w_l * lgts).sum())

        numeric = central_diff(f, flatten_params(params))
        analytic = flatten_params(grads)
        assert max_rel_err(analytic, numeric) <= FD_TOL, f"seed {seed}"


def test_softmax_rows_and_log_softmax_consistency():
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = rng.normal(scale=rng.uniform(0.1, 50), size=(6, 4))
        p = softmax(z)
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert (p > 0).all()
        assert np.allclose(np.log(p), log_softmax(z), atol=1e-9)
    # extreme logits stay finite
    p = softmax(np.array([[1e4, 0.0, -1e4]]))
    assert np.isfinite(p).all() and np.isclose(p.sum(), 1.0)


def test_flatten_unflatten_round_trip():
    params = small_network(7)
    vec = flatten_params(params)
    back = unflatten_params(vec, params)
    assert all(np.array_equal(x, y) for x, y in zip(params.arrays(), back.arrays()))
    vec2 = vec.copy()
    vec2[0] += 1.0
    assert unflatten_params(vec2, params).weights[0].flat[0] != params.weights[0].flat[0]


def test_optimizer_step_matches_manual_sgd_momentum():
    params = small_network(1)
    grads = small_network(2)  # arbitrary same-shaped arrays as gradients
    vel = MomentumState.zeros_like(params)
    before = [a.copy() for a in params.arrays()]
    gvals = [a.copy() for a in grads.arrays()]
    assert optimizer_step(params, grads, vel, lr=0.1, momentum=0.9)
    for b, g, now in zip(before, gvals, params.arrays()):
        assert np.allclose(now, b - 0.1 * g, atol=1e-12)
    # second step folds the velocity in
    before2 = [a.copy() for a in params.arrays()]
    assert optimizer_step(params, grads, vel, lr=0.1, momentum=0.9)
    for b, g, now in zip(before2, gvals, params.arrays()):
        assert np.allclose(now, b - 0.1 * (0.9 * g + g), atol=1e-12)


def test_optimizer_step_skips_non_finite():
    params = small_network(1)
    grads = small_network(2)
    grads.weights[0][0, 0] = np.nan
    vel = MomentumState.zeros_like(params)
    before = [a.copy() for a in params.arrays()]
    assert not optimizer_step(params, grads, vel, lr=0.1, momentum=0.9)
    for b, now in zip(before, params.arrays()):
        assert np.array_equal(b, now)
    assert all(np.array_equal(v, np.zeros_like(v)) for v in vel.velocities)


def test_pool_and_broadcast_superpoints():
    values = np.array([[1.0], [3.0], [5.0], [7.0]])
    ids = np.array([0, 0, 1, 1])
    pooled = pool_superpoints(values, ids)
    assert np.allclose(pooled, [[2.0], [6.0]])
    assert np.allclose(broadcast_superpoints(pooled, ids), [[2.0], [2.0], [6.0], [6.0]])


def test_pool_requires_compact_ids():
    with pytest.raises(DataError):
        pool_superpoints(np.zeros((3, 2)), np.array([0, 2, 2]))


def test_input_features_channel_layout():
    scene = synth_scene(3, 30, 1.0, 0.1, seed=0)
    plain = input_features(scene, 0)
    assert plain.shape == (90, 6)
    assert np.array_equal(plain[:, :3], scene.positions)
    assert np.array_equal(plain[:, 3:], scene.colors)
    with_nbrs = input_features(scene, 4)
    assert with_nbrs.shape == (90, 12)
    assert np.array_equal(with_nbrs[:, :6], plain)
    assert n_input_channels(True, 4) == 12
    assert n_input_channels(True, 0) == 6
    assert n_input_channels(False, 0) == 3


def test_input_features_neighbor_block_is_neighborhood_mean():
    scene = synth_scene(2, 20, 1.5, 0.1, seed=2)
    k = 3
    feats = input_features(scene, k)
    from protoseg.cloud import nearest_neighbor_indices

    nbr = nearest_neighbor_indices(scene.positions, k)
    raw = feats[:, :6]
    want = raw[nbr].mean(axis=1)
    assert np.allclose(feats[:, 6:], want, atol=1e-12)


def test_input_features_positions_only():
    cloud = PointCloud(positions=np.random.default_rng(1).random((15, 3)))
    feats = input_features(cloud, 2)
    assert feats.shape == (15, 6)
