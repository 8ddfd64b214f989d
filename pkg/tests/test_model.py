import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import central_difference, propagate_oracle, readout_oracle
from sgdp.model import (
    PARAM_NAMES, GraphBatch, ModelParams, TrainConfig, VocabMismatchError, backward, forward,
    init_params, load_checkpoint, loss, predict, propagate, readout, save_checkpoint, score,
    softmax, train,
)
from sgdp.stream_graph import build_graph


def small(d=3, k=4, seed=0):
    return init_params(TrainConfig(k=k, d=d, seed=seed))


def as_lists(p: ModelParams):
    return {n: getattr(p, n).tolist() for n in PARAM_NAMES}


def test_init_shapes_and_determinism():
    cfg = TrainConfig()
    p, q = init_params(cfg), init_params(cfg)
    assert p.embed.shape == (1001, 200) and p.W_a.shape == (200, 400)
    for a, b in zip(p.tensors(), q.tensors()):
        assert np.array_equal(a, b)
    other = init_params(TrainConfig(seed=1))
    assert not np.array_equal(p.embed, other.embed)
    n = p.embed.size
    assert abs(p.embed.mean()) < 3 * 0.1 / math.sqrt(n)
    assert abs(p.embed.std() - 0.1) < 0.002


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(k=0)
    with pytest.raises(ValueError):
        TrainConfig(w_s=2)
    assert TrainConfig(lr0=1.0).lr_at(7) == pytest.approx(0.95 ** 2)


def test_propagate_zero_params_halves_state():
    p = small().map(np.zeros_like)
    g = build_graph([1, 2, 1])
    h0 = np.array([[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]])
    np.testing.assert_allclose(propagate(p, g, h0), 0.5 * h0)
    assert np.array_equal(propagate(p, g, h0, prop_steps=0), h0)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=6), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_propagate_matches_oracle(classes, seed):
    p = small(d=2, seed=seed)
    g = build_graph(classes)
    h0 = np.random.default_rng(seed).normal(size=(g.u, 2))
    ref = propagate_oracle(as_lists(p), g.m_h.tolist(), h0.tolist())
    np.testing.assert_allclose(propagate(p, g, h0), ref, atol=1e-12)


def test_propagate_locality():
    # an isolated node (no edges) only sees its own state
    p = small(d=3, seed=4)
    g = build_graph([1])
    h0 = np.array([[0.3, -0.1, 0.2]])
    ref = propagate_oracle(as_lists(p), [[0.0, 0.0]], h0.tolist())
    np.testing.assert_allclose(propagate(p, g, h0), ref, atol=1e-12)


def test_readout_zero_query_gives_affine_of_last():
    p = small(d=2, seed=2)
    p.q[:] = 0.0
    states = np.array([[1.0, 2.0], [3.0, 4.0]])
    expected = p.W_f @ np.concatenate([states[0], [0.0, 0.0]]) + p.b_h
    np.testing.assert_allclose(readout(p, states, np.array([1, 0])), expected)


def test_readout_single_position():
    p = small(d=2, seed=3)
    x = np.array([[0.4, -0.7]])
    sig = 1 / (1 + np.exp(-(p.W_1 @ x[0] + p.W_2 @ x[0] + p.b_g)))
    alpha = p.q @ sig
    expected = p.W_f @ np.concatenate([x[0], alpha * x[0]]) + p.b_h
    np.testing.assert_allclose(readout(p, x, np.array([0])), expected)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=6), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_readout_matches_oracle(classes, seed):
    p = small(d=2, seed=seed)
    g = build_graph(classes)
    h = np.random.default_rng(seed + 1).normal(size=(g.u, 2))
    ref = readout_oracle(as_lists(p), h.tolist(), g.alias.tolist())
    np.testing.assert_allclose(readout(p, h, g.alias), ref, atol=1e-12)


def test_score_uniform_for_zero_vector():
    p = small(d=3, k=4)
    y = softmax(score(p, np.zeros(3)))
    np.testing.assert_allclose(y, np.full(5, 0.2))


def test_score_aligned_row_wins():
    p = small(d=3, k=4)
    p.embed[:] = 0.0
    p.embed[2] = [1.0, 0.0, 0.0]
    assert int(np.argmax(score(p, np.array([5.0, 0.0, 0.0])))) == 2


def test_softmax_two_classes():
    y = softmax(np.array([1.0, 0.0]))
    np.testing.assert_allclose(y, [math.e / (math.e + 1), 1 / (math.e + 1)])


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=10), st.floats(-100, 100))
def test_softmax_shift_invariant(z, c):
    z = np.array(z)
    np.testing.assert_allclose(softmax(z), softmax(z + c), atol=1e-12)
    assert softmax(z).sum() == pytest.approx(1.0)


def test_loss_examples():
    assert loss(np.array([0.0, 1.0, 0.0]), 1) == pytest.approx(0.0, abs=1e-9)
    expected = -math.log(1 / 3) - 2 * math.log(2 / 3)
    assert loss(np.full(3, 1 / 3), 0) == pytest.approx(expected)
    assert expected == pytest.approx(1.9095, abs=1e-4)
    assert loss(np.array([1.0, 0.0]), 1) == pytest.approx(-2 * math.log(1e-12))
    p = small(d=1, k=1).map(np.zeros_like)
    p.b_h[:] = 2.0
    assert loss(np.array([0.0, 1.0]), 1, p, l2_lambda=0.5) == pytest.approx(0.5 * 4.0, abs=1e-9)


def _fd_setup(seed=0):
    p = small(d=3, k=4, seed=seed)
    batch = GraphBatch.from_classes([[1, 2, 1, 3], [4, 4, 0, 2]])
    targets = np.array([2, 0])
    return p, batch, targets


def test_gradient_matches_finite_differences():
    p, batch, targets = _fd_setup()
    lam = 1e-3
    f = lambda: loss(forward(p, batch).probs, targets, p, lam)  # noqa: E731
    g = backward(p, forward(p, batch), targets, lam)
    rng = np.random.default_rng(0)
    for name in PARAM_NAMES:
        t, gt = getattr(p, name), getattr(g, name)
        for _ in range(4):
            idx = tuple(int(rng.integers(s)) for s in t.shape)
            fd = central_difference(f, t, idx)
            assert gt[idx] == pytest.approx(fd, rel=1e-4, abs=1e-7), name


def test_gradient_scales_with_loss():
    p, batch, targets = _fd_setup(seed=1)
    tr = forward(p, batch)
    g1 = backward(p, tr, targets, 1e-4)
    g2 = backward(p, tr, targets, 1e-4, scale=2.0)
    for a, b in zip(g1.tensors(), g2.tensors()):
        np.testing.assert_allclose(b, 2 * a)


def test_untouched_embedding_rows_get_gradient():
    # every row is scored against, so every row moves
    p = small(d=3, k=6, seed=2)
    batch = GraphBatch.from_classes([[1, 2, 1]])
    g = backward(p, forward(p, batch), np.array([1]))
    assert np.all(np.abs(g.embed).sum(axis=1) > 0)


def test_non_finite_raises_with_stream_id():
    p = small(d=3, k=4)
    p.W_f[0, 0] = np.nan
    batch = GraphBatch.from_classes([[1, 2]], stream_ids=np.array([17]))
    with pytest.raises(FloatingPointError, match="17"):
        forward(p, batch)


def _toy_set():
    classes = np.array([[1, 2, 3], [2, 3, 1], [3, 1, 2]] * 4)
    targets = np.array([1, 2, 3] * 4)
    return classes, targets


def test_training_deterministic_and_learns():
    classes, targets = _toy_set()
    cfg = TrainConfig(k=3, d=8, epochs=30, batch=4, lr0=0.05, seed=3)
    p1, h1 = train(classes, targets, cfg, 4)
    p2, h2 = train(classes, targets, cfg, 4)
    assert h1 == h2
    for a, b in zip(p1.tensors(), p2.tensors()):
        assert np.array_equal(a, b)
    assert h1[-1]["accuracy"] == 1.0
    assert predict(p1, [1, 2, 3])[0] == 1


def test_repeated_stream_loss_decreases():
    classes = np.array([[1, 2, 1, 2]] * 8)
    targets = np.array([1] * 8)
    cfg = TrainConfig(k=2, d=4, epochs=15, batch=8, lr0=0.01, l2_lambda=0.0)
    _, hist = train(classes, targets, cfg, 3)
    losses = [h["loss"] for h in hist]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_early_stop_on_tol():
    classes, targets = _toy_set()
    cfg = TrainConfig(k=3, d=4, epochs=50, tol=1e9)
    _, hist = train(classes, targets, cfg, 4)
    assert len(hist) == 1


def test_checkpoint_roundtrip(tmp_path):
    p = small(d=3, k=4)
    cfg = TrainConfig(k=4, d=3)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, p, cfg, "abc")
    q, cfg2, side = load_checkpoint(path, "abc")
    assert cfg2 == cfg and side["vocab_hash"] == "abc"
    for a, b in zip(p.tensors(), q.tensors()):
        np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-8)
    with pytest.raises(VocabMismatchError):
        load_checkpoint(path, "xyz")


def _sig(x):
    return 1 / (1 + np.exp(-x))


def test_propagation_locality_formula():
    # no edges and no aggregation weights: each node only sees itself
    p = small(d=2, seed=6)
    p.W_a[:] = 0.0
    p.b_a[:] = 0.0
    g = build_graph([1, 2])
    g.m_h[:] = 0.0
    prev = np.array([[0.3, -0.8], [1.1, 0.2]])
    got = propagate(p, g, prev)
    for i, h in enumerate(prev):
        z = _sig(p.U_z @ h)
        ht = np.tanh(p.U_h @ (_sig(p.U_r @ h) * h))
        np.testing.assert_allclose(got[i], (1 - z) * h + z * ht, atol=1e-12)


def test_softmax_two_dim_scores():
    p = small(d=2, k=2).map(np.zeros_like)
    p.embed[:] = [[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]]
    v_h = np.array([0.5, -0.25])
    z = [0.0, 0.5 - 0.5, -0.5 - 0.125]
    e = [math.exp(x) for x in z]
    np.testing.assert_allclose(softmax(score(p, v_h)), [x / sum(e) for x in e], rtol=0, atol=1e-12)


def test_predict_probability_range():
    p = small(d=4, k=5, seed=9)
    cls, prob = predict(p, [1, 2, 3])
    y = forward(p, GraphBatch.from_classes([[1, 2, 3]])).probs[0]
    assert 0 < prob <= 1 and cls == int(np.argmax(y)) and prob == pytest.approx(y.max())
    assert y.sum() == pytest.approx(1.0, abs=1e-9)


def test_backward_rejects_target_shape():
    p, batch, _ = _fd_setup()
    with pytest.raises(ValueError):
        backward(p, forward(p, batch), np.array([1, 2, 3]))
