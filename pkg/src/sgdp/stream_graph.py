"""Per-stream weighted directed graphs over delta classes.

Nodes are the distinct classes of a window in first-occurrence order. Each
graph carries two row-normalized adjacency pairs (incoming, outgoing):

* sequential: edge a -> a+1 for consecutive positions, weight = count
* full-connect: every ordered position pair a < b, weight 1/(b - a)

and their weighted fusion ``m_h = [in | out]`` of shape (u, 2u).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass
class StreamGraph:
    nodes: np.ndarray  # (u,) class ids
    alias: np.ndarray  # (n,) position -> node slot
    m_s_in: np.ndarray
    m_s_out: np.ndarray
    m_f_in: np.ndarray
    m_f_out: np.ndarray
    m_h: np.ndarray  # (u, 2u)

    @property
    def u(self) -> int:
        return len(self.nodes)

    def to_json(self) -> str:
        return json.dumps({k: np.asarray(getattr(self, k)).tolist() for k in
                           ("nodes", "alias", "m_s_in", "m_s_out", "m_f_in", "m_f_out", "m_h")})


def node_alias(classes) -> tuple[np.ndarray, np.ndarray]:
    slot: dict[int, int] = {}
    alias = np.empty(len(classes), dtype=np.int64)
    for pos, c in enumerate(classes):
        alias[pos] = slot.setdefault(int(c), len(slot))
    return np.fromiter(slot, dtype=np.int64, count=len(slot)), alias


def row_normalize(w: np.ndarray) -> np.ndarray:
    s = w.sum(axis=1, keepdims=True)
    return np.divide(w, s, out=np.zeros_like(w, dtype=np.float64), where=s > 0)


def build_sequential(classes):
    """Returns (m_s_in, m_s_out, nodes, alias)."""
    nodes, alias = node_alias(classes)
    u = len(nodes)
    counts = np.zeros((u, u))
    np.add.at(counts, (alias[:-1], alias[1:]), 1.0)
    return row_normalize(counts.T), row_normalize(counts), nodes, alias


def build_full_connect(classes):
    """Returns (m_f_in, m_f_out)."""
    nodes, alias = node_alias(classes)
    u, n = len(nodes), len(alias)
    w = np.zeros((u, u))
    if n > 1:
        a, b = np.triu_indices(n, k=1)
        np.add.at(w, (alias[a], alias[b]), 1.0 / (b - a))
    return row_normalize(w.T), row_normalize(w)


def hybrid(m_s_in, m_s_out, m_f_in, m_f_out, w_s: float = 0.5) -> np.ndarray:
    shapes = {m.shape for m in (m_s_in, m_s_out, m_f_in, m_f_out)}
    if len(shapes) != 1 or len(next(iter(shapes))) != 2:
        raise ValueError(f"adjacency blocks must share one 2-d shape, got {shapes}")
    if not 0.0 <= w_s <= 1.0:
        raise ValueError("w_s must lie in [0, 1]")
    w_f = 1.0 - w_s
    return np.hstack([w_s * m_s_in + w_f * m_f_in, w_s * m_s_out + w_f * m_f_out])


def build_graph(classes, w_s: float = 0.5) -> StreamGraph:
    classes = np.asarray(classes)
    if classes.ndim != 1 or len(classes) < 1:
        raise ValueError("stream must be a non-empty 1-d sequence")
    s_in, s_out, nodes, alias = build_sequential(classes)
    f_in, f_out = build_full_connect(classes)
    return StreamGraph(nodes, alias, s_in, s_out, f_in, f_out, hybrid(s_in, s_out, f_in, f_out, w_s))


def batch_graphs(classes: np.ndarray, w_s: float = 0.5):
    """Pad per-stream graphs of a (B, n) class batch to a common node count.

    Returns (nodes (B, U), node_mask (B, U), alias (B, n), m_in (B, U, U),
    m_out (B, U, U)) where m_in/m_out are the two halves of each m_h.
    Padded node slots carry class 0, zero adjacency and mask False.
    """
    classes = np.asarray(classes)
    graphs = [build_graph(row, w_s) for row in classes]
    B, n = classes.shape
    U = max(g.u for g in graphs)
    nodes = np.zeros((B, U), dtype=np.int64)
    mask = np.zeros((B, U), dtype=bool)
    alias = np.stack([g.alias for g in graphs])
    m_in = np.zeros((B, U, U))
    m_out = np.zeros((B, U, U))
    for b, g in enumerate(graphs):
        u = g.u
        nodes[b, :u] = g.nodes
        mask[b, :u] = True
        m_in[b, :u, :u] = g.m_h[:, :u]
        m_out[b, :u, :u] = g.m_h[:, u:]
    return nodes, mask, alias, m_in, m_out
