import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import graph_oracle
from sgdp.stream_graph import batch_graphs, build_full_connect, build_graph, build_sequential, hybrid

A, B, C = 3, 7, 5

streams = st.lists(st.integers(0, 6), min_size=1, max_size=12)


def test_sequential_revisits():
    s_in, s_out, nodes, alias = build_sequential([A, B, C, B, A])
    assert nodes.tolist() == [A, B, C]
    assert alias.tolist() == [0, 1, 2, 1, 0]
    np.testing.assert_allclose(s_out, [[0, 1, 0], [0.5, 0, 0.5], [0, 1, 0]])
    np.testing.assert_allclose(s_in, [[0, 1, 0], [0.5, 0, 0.5], [0, 1, 0]])


def test_single_node():
    g = build_graph([A])
    assert g.u == 1
    for m in (g.m_s_in, g.m_s_out, g.m_f_in, g.m_f_out):
        assert m.tolist() == [[0.0]]
    assert g.m_h.shape == (1, 2)


def test_self_loop():
    s_in, s_out, nodes, _ = build_sequential([A, A, A])
    assert nodes.tolist() == [A]
    assert s_in.tolist() == [[1.0]] and s_out.tolist() == [[1.0]]


def test_full_connect_pair():
    f_in, f_out = build_full_connect([A, B])
    assert f_out.tolist() == [[0, 1], [0, 0]]
    assert f_in.tolist() == [[0, 0], [1, 0]]


def test_full_connect_three():
    _, f_out = build_full_connect([A, B, C])
    np.testing.assert_allclose(f_out[0], [0, 2 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(f_out[1], [0, 0, 1])
    np.testing.assert_allclose(f_out[2], [0, 0, 0])


def test_hybrid_weights():
    one, zero = np.ones((2, 2)), np.zeros((2, 2))
    assert np.array_equal(hybrid(one, one, zero, zero, 1.0), np.ones((2, 4)))
    assert np.array_equal(hybrid(one, one, zero, zero, 0.0), np.zeros((2, 4)))
    m = hybrid(one, zero, 0.5 * one, zero, 0.5)
    np.testing.assert_allclose(m[:, :2], 0.75)


def test_hybrid_rejects_mismatch():
    with pytest.raises(ValueError):
        hybrid(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 3)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        hybrid(*[np.zeros((1, 1))] * 4, w_s=1.5)


def test_rejects_empty_stream():
    with pytest.raises(ValueError):
        build_graph([])


@given(streams, st.floats(0, 1))
def test_matches_oracle(classes, w_s):
    g = build_graph(classes, w_s)
    ref = graph_oracle(classes, w_s)
    assert g.nodes.tolist() == ref["nodes"]
    for key in ("m_s_in", "m_s_out", "m_f_in", "m_f_out", "m_h"):
        np.testing.assert_allclose(getattr(g, key), ref[key], rtol=0, atol=1e-12)


@given(streams)
def test_rows_sum_to_zero_or_one(classes):
    g = build_graph(classes)
    for m in (g.m_s_in, g.m_s_out, g.m_f_in, g.m_f_out):
        sums = m.sum(axis=1)
        assert np.all((np.abs(sums) < 1e-12) | (np.abs(sums - 1) < 1e-12))
        assert (m >= 0).all()


@given(streams, st.permutations(range(7)))
def test_relabeling_preserves_structure(classes, perm):
    g = build_graph(classes)
    h = build_graph([perm[c] for c in classes])
    assert h.nodes.tolist() == [perm[c] for c in g.nodes]
    assert np.array_equal(g.m_h, h.m_h)


def test_batch_padding():
    nodes, mask, alias, m_in, m_out = batch_graphs(np.array([[1, 1, 1], [1, 2, 3]]))
    assert nodes.tolist() == [[1, 0, 0], [1, 2, 3]]
    assert mask.tolist() == [[True, False, False], [True, True, True]]
    assert not m_in[0, 1:].any() and not m_in[0, :, 1:].any()
    g = build_graph([1, 2, 3])
    assert np.array_equal(np.hstack([m_in[1], m_out[1]]), g.m_h)


def test_json_dump():
    g = build_graph([A, B, A])
    back = json.loads(g.to_json())
    assert back["nodes"] == [A, B] and back["alias"] == [0, 1, 0]
    assert np.array_equal(np.array(back["m_h"]), g.m_h)
