"""Gated graph neural network over delta-stream graphs, in plain numpy.

Forward pass, per propagation step (row-vector convention, ``x @ W.T`` is W·x):

    P  = H @ W_a + b_a                      (u, 2d), split into P_in | P_out
    a  = M_in @ P_in + M_out @ P_out        neighbour aggregation through m_h
    z  = sigmoid(a W_z^T + H U_z^T)
    r  = sigmoid(a W_r^T + H U_r^T)
    h~ = tanh(a W_h^T + (r * H) U_h^T)
    H' = (1 - z) * H + z * h~

then attention readout over the n window positions, full-vocabulary scoring
against the embedding table, softmax, and the summed binary cross-entropy
loss with an L2 penalty over every parameter.

Everything is batched over streams; graphs are padded to a common node count
and padded nodes never feed back into real ones.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .stream_graph import batch_graphs

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12
PARAM_NAMES = ("embed", "W_a", "b_a", "W_z", "U_z", "W_r", "U_r", "W_h", "U_h",
               "W_1", "W_2", "q", "b_g", "W_f", "b_h")


@dataclass
class TrainConfig:
    k: int = 1000
    d: int = 200
    lr0: float = 1.5e-3
    lr_decay: float = 0.95
    decay_every: int = 3
    batch: int = 128
    epochs: int = 10
    l2_lambda: float = 1e-5
    prop_steps: int = 1
    w_s: float = 0.5
    seed: int = 0
    tol: float = 0.0
    window: int = 10
    stride: int = 1
    gap_ns: float = 10_000.0  # 0.01 ms
    variant: str = "base"
    dtype: str = "float64"

    def __post_init__(self):
        for name in ("k", "d", "batch", "window", "stride", "decay_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.epochs < 0 or self.prop_steps < 0:
            raise ValueError("epochs and prop_steps must be >= 0")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.lr0 <= 0 or self.l2_lambda < 0 or self.gap_ns <= 0:
            raise ValueError("lr0 and gap_ns must be positive, l2_lambda non-negative")
        if not 0.0 <= self.w_s <= 1.0:
            raise ValueError("w_s must lie in [0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * self.lr_decay ** (epoch // self.decay_every)


@dataclass
class ModelParams:
    embed: np.ndarray  # (C, d), C = K + 1
    W_a: np.ndarray  # (d, 2d)
    b_a: np.ndarray  # (2d,)
    W_z: np.ndarray
    U_z: np.ndarray
    W_r: np.ndarray
    U_r: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    W_1: np.ndarray
    W_2: np.ndarray
    q: np.ndarray  # (d,)
    b_g: np.ndarray  # (d,)
    W_f: np.ndarray  # (d, 2d)
    b_h: np.ndarray  # (d,)

    @property
    def d(self) -> int:
        return self.embed.shape[1]

    @property
    def num_classes(self) -> int:
        return self.embed.shape[0]

    def tensors(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    def map(self, fn) -> "ModelParams":
        return ModelParams(*(fn(t) for t in self.tensors()))

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def sq_norm(self) -> float:
        return float(sum(np.vdot(t, t) for t in self.tensors()))


def param_shapes(num_classes: int, d: int) -> dict[str, tuple]:
    sq = (d, d)
    return {
        "embed": (num_classes, d), "W_a": (d, 2 * d), "b_a": (2 * d,),
        "W_z": sq, "U_z": sq, "W_r": sq, "U_r": sq, "W_h": sq, "U_h": sq,
        "W_1": sq, "W_2": sq, "q": (d,), "b_g": (d,), "W_f": (d, 2 * d), "b_h": (d,),
    }


def init_params(config: TrainConfig, num_classes: int | None = None) -> ModelParams:
    """Gaussian(0, 0.1) initialization, deterministic in ``config.seed``."""
    c = config.k + 1 if num_classes is None else num_classes
    rng = np.random.default_rng(config.seed)
    dtype = np.dtype(config.dtype)
    return ModelParams(**{name: rng.normal(0.0, 0.1, shape).astype(dtype)
                          for name, shape in param_shapes(c, config.d).items()})


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(z):
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class GraphBatch:
    nodes: np.ndarray  # (B, U)
    mask: np.ndarray  # (B, U)
    alias: np.ndarray  # (B, n)
    m_in: np.ndarray  # (B, U, U)
    m_out: np.ndarray  # (B, U, U)
    stream_ids: np.ndarray | None = None

    @classmethod
    def from_classes(cls, classes, w_s: float = 0.5, stream_ids=None) -> "GraphBatch":
        classes = np.atleast_2d(np.asarray(classes, dtype=np.int64))
        return cls(*batch_graphs(classes, w_s), stream_ids=stream_ids)

    @classmethod
    def from_graph(cls, graph) -> "GraphBatch":
        u = graph.u
        return cls(graph.nodes[None], np.ones((1, u), bool), graph.alias[None],
                   graph.m_h[None, :, :u], graph.m_h[None, :, u:])

    def take(self, idx) -> "GraphBatch":
        ids = None if self.stream_ids is None else self.stream_ids[idx]
        return GraphBatch(self.nodes[idx], self.mask[idx], self.alias[idx],
                          self.m_in[idx], self.m_out[idx], ids)

    def __len__(self):
        return len(self.nodes)


@dataclass
class StepCache:
    h: np.ndarray
    a: np.ndarray
    z: np.ndarray
    r: np.ndarray
    ht: np.ndarray


@dataclass
class ForwardTrace:
    batch: GraphBatch
    steps: list[StepCache] = field(default_factory=list)
    h: np.ndarray | None = None  # final node states (B, U, d)
    x: np.ndarray | None = None  # per-position states (B, n, d)
    s: np.ndarray | None = None  # attention sigmoid (B, n, d)
    alpha: np.ndarray | None = None  # (B, n)
    v_l: np.ndarray | None = None
    v_g: np.ndarray | None = None
    v_h: np.ndarray | None = None
    scores: np.ndarray | None = None  # (B, C)
    probs: np.ndarray | None = None  # (B, C)


def _check_finite(arr, batch: GraphBatch, what: str):
    bad = ~np.isfinite(arr.reshape(len(arr), -1)).all(axis=1)
    if bad.any():
        ids = batch.stream_ids[bad] if batch.stream_ids is not None else np.nonzero(bad)[0]
        raise FloatingPointError(f"non-finite {what} in stream(s) {ids[:10].tolist()}")


def _prop_step(p: ModelParams, h, m_in, m_out):
    d = p.d
    proj = h @ p.W_a + p.b_a
    a = m_in @ proj[..., :d] + m_out @ proj[..., d:]
    z = sigmoid(a @ p.W_z.T + h @ p.U_z.T)
    r = sigmoid(a @ p.W_r.T + h @ p.U_r.T)
    ht = np.tanh(a @ p.W_h.T + (r * h) @ p.U_h.T)
    return (1.0 - z) * h + z * ht, StepCache(h, a, z, r, ht)


def propagate(params: ModelParams, graph, node_states, prop_steps: int = 1):
    """Gated update of a single graph's (u, d) node states."""
    gb = GraphBatch.from_graph(graph)
    h = np.asarray(node_states)[None]
    for _ in range(prop_steps):
        h, _ = _prop_step(params, h, gb.m_in, gb.m_out)
        _check_finite(h, gb, "node state")
    return h[0]


def _readout(p: ModelParams, h, alias, tr: ForwardTrace | None = None):
    bidx = np.arange(len(h))[:, None]
    x = h[bidx, alias]  # (B, n, d)
    v_l = x[:, -1]
    s = sigmoid((v_l @ p.W_1.T)[:, None, :] + x @ p.W_2.T + p.b_g)
    alpha = s @ p.q
    v_g = np.einsum("bn,bnd->bd", alpha, x)
    v_h = np.concatenate([v_l, v_g], axis=1) @ p.W_f.T + p.b_h
    if tr is not None:
        tr.x, tr.s, tr.alpha, tr.v_l, tr.v_g, tr.v_h = x, s, alpha, v_l, v_g, v_h
    return v_h


def readout(params: ModelParams, node_states, alias) -> np.ndarray:
    """Fused stream vector v_h from (u, d) node states and the (n,) position alias."""
    return _readout(params, np.asarray(node_states)[None], np.asarray(alias)[None])[0]


def score(params: ModelParams, v_h):
    return v_h @ params.embed.T


def probs(scores):
    return softmax(scores)


def forward(params: ModelParams, batch: GraphBatch, prop_steps: int = 1) -> ForwardTrace:
    tr = ForwardTrace(batch)
    h = params.embed[batch.nodes]
    for _ in range(prop_steps):
        h, cache = _prop_step(params, h, batch.m_in, batch.m_out)
        tr.steps.append(cache)
    tr.h = h
    _check_finite(h, batch, "node state")
    v_h = _readout(params, h, batch.alias, tr)
    tr.scores = score(params, v_h)
    tr.probs = softmax(tr.scores)
    _check_finite(tr.probs, batch, "probability")
    return tr


def sample_losses(y_hat, targets) -> np.ndarray:
    """Summed binary cross-entropy per row, log arguments clamped at 1e-12."""
    y_hat = np.atleast_2d(y_hat)
    onehot = np.zeros_like(y_hat)
    onehot[np.arange(len(y_hat)), np.atleast_1d(targets)] = 1.0
    pos = np.log(np.maximum(y_hat, LOG_CLAMP))
    neg = np.log(np.maximum(1.0 - y_hat, LOG_CLAMP))
    return -(onehot * pos + (1.0 - onehot) * neg).sum(axis=1)


def loss(y_hat, target, params: ModelParams | None = None, l2_lambda: float = 0.0) -> float:
    """Mean over rows of the summed BCE plus ``l2_lambda * ||theta||^2``."""
    val = float(sample_losses(y_hat, target).mean())
    if params is not None and l2_lambda:
        val += l2_lambda * params.sq_norm()
    return val


def backward(params: ModelParams, tr: ForwardTrace, targets, l2_lambda: float = 0.0,
             scale: float = 1.0) -> ModelParams:
    """Exact gradient of ``scale * loss(tr.probs, targets, params, l2_lambda)``."""
    p, g = params, params.zeros_like()
    batch = tr.batch
    targets = np.atleast_1d(targets)
    B, d = len(tr.probs), p.d
    if targets.shape != (B,):
        raise ValueError(f"expected {B} targets, got shape {targets.shape}")

    # loss -> scores
    y = tr.probs
    onehot = np.zeros_like(y)
    onehot[np.arange(B), targets] = 1.0
    dy = np.where(y > LOG_CLAMP, -onehot / np.maximum(y, LOG_CLAMP), 0.0)
    dy += np.where(1.0 - y > LOG_CLAMP, (1.0 - onehot) / np.maximum(1.0 - y, LOG_CLAMP), 0.0)
    dy *= scale / B
    dz = y * (dy - (dy * y).sum(axis=1, keepdims=True))

    # scores -> v_h and embedding
    g.embed += dz.T @ tr.v_h
    dvh = dz @ p.embed

    # v_h = W_f [v_l; v_g] + b_h
    c = np.concatenate([tr.v_l, tr.v_g], axis=1)
    g.W_f += dvh.T @ c
    g.b_h += dvh.sum(axis=0)
    dc = dvh @ p.W_f
    dvl, dvg = dc[:, :d].copy(), dc[:, d:]

    # attention: alpha_i = q . s_i, v_g = sum alpha_i x_i
    x, s = tr.x, tr.s
    dalpha = np.einsum("bd,bnd->bn", dvg, x)
    dx = tr.alpha[..., None] * dvg[:, None, :]
    g.q += np.einsum("bn,bnd->d", dalpha, s)
    dpre = dalpha[..., None] * p.q * s * (1.0 - s)
    g.b_g += dpre.sum(axis=(0, 1))
    g.W_2 += dpre.reshape(-1, d).T @ x.reshape(-1, d)
    dx += dpre @ p.W_2
    dpre_sum = dpre.sum(axis=1)
    g.W_1 += dpre_sum.T @ tr.v_l
    dvl += dpre_sum @ p.W_1
    dx[:, -1] += dvl

    # positions -> node states
    dh = np.zeros_like(tr.h)
    bidx = np.broadcast_to(np.arange(B)[:, None], batch.alias.shape)
    np.add.at(dh, (bidx, batch.alias), dx)

    for st in reversed(tr.steps):
        dh = _prop_step_backward(p, g, st, dh, batch)

    np.add.at(g.embed, batch.nodes[batch.mask], dh[batch.mask])

    if l2_lambda:
        for gt, pt in zip(g.tensors(), p.tensors()):
            gt += (2.0 * l2_lambda * scale) * pt
    return g


def _prop_step_backward(p: ModelParams, g: ModelParams, st: StepCache, dh_new, batch: GraphBatch):
    d = p.d
    h, a, z, r, ht = st.h, st.a, st.z, st.r, st.ht
    flat = lambda t: t.reshape(-1, t.shape[-1])

    dz = dh_new * (ht - h)
    dh = dh_new * (1.0 - z)
    dgh = dh_new * z * (1.0 - ht * ht)

    rh = r * h
    g.W_h += flat(dgh).T @ flat(a)
    g.U_h += flat(dgh).T @ flat(rh)
    da = dgh @ p.W_h
    drh = dgh @ p.U_h
    dh += drh * r
    dgr = drh * h * r * (1.0 - r)
    dgz = dz * z * (1.0 - z)

    g.W_r += flat(dgr).T @ flat(a)
    g.U_r += flat(dgr).T @ flat(h)
    g.W_z += flat(dgz).T @ flat(a)
    g.U_z += flat(dgz).T @ flat(h)
    da += dgr @ p.W_r + dgz @ p.W_z
    dh += dgr @ p.U_r + dgz @ p.U_z

    # a = M_in P_in + M_out P_out
    dproj = np.concatenate([np.swapaxes(batch.m_in, 1, 2) @ da,
                            np.swapaxes(batch.m_out, 1, 2) @ da], axis=-1)
    g.W_a += flat(h).T @ flat(dproj)
    g.b_a += flat(dproj).sum(axis=0)
    dh += dproj @ p.W_a.T
    return dh


def loss_and_grad(params: ModelParams, batch: GraphBatch, targets, prop_steps: int = 1,
                  l2_lambda: float = 0.0):
    tr = forward(params, batch, prop_steps)
    val = loss(tr.probs, targets, params, l2_lambda)
    return val, backward(params, tr, targets, l2_lambda), tr


def predict_batch(params: ModelParams, batch: GraphBatch, prop_steps: int = 1):
    """(argmax class, its probability) per stream; ties go to the lower class id."""
    y = forward(params, batch, prop_steps).probs
    cls = y.argmax(axis=1)
    return cls, y[np.arange(len(y)), cls]


def predict(params: ModelParams, classes, prop_steps: int = 1, w_s: float = 0.5) -> tuple[int, float]:
    cls, pr = predict_batch(params, GraphBatch.from_classes(classes, w_s), prop_steps)
    return int(cls[0]), float(pr[0])


class Adam:
    def __init__(self, params: ModelParams, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: ModelParams, grads: ModelParams, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, gr, m, v in zip(params.tensors(), grads.tensors(), self.m.tensors(), self.v.tensors()):
            m *= self.beta1
            m += (1.0 - self.beta1) * gr
            v *= self.beta2
            v += (1.0 - self.beta2) * gr * gr
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def build_graph_batch(classes, w_s: float = 0.5) -> GraphBatch:
    """Graphs for a whole (S, n) stream array; identical windows are built once."""
    classes = np.asarray(classes, dtype=np.int64)
    uniq, inverse = np.unique(classes, axis=0, return_inverse=True)
    gb = GraphBatch.from_classes(uniq, w_s)
    out = gb.take(inverse.reshape(-1))
    out.stream_ids = np.arange(len(classes))
    return out


def train(classes, targets, config: TrainConfig, num_classes: int, params: ModelParams | None = None,
          callback=None):
    """Mini-batch Adam over (S, n) encoded windows and their next-delta targets.

    Returns (params, history) where history holds one dict per epoch with the
    learning rate, mean loss and top-1 training accuracy.
    """
    classes = np.asarray(classes, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if len(classes) == 0:
        raise ValueError("empty training set")
    if params is None:
        params = init_params(config, num_classes)
    dtype = np.dtype(config.dtype)
    graphs = build_graph_batch(classes, config.w_s)
    graphs.m_in = graphs.m_in.astype(dtype)
    graphs.m_out = graphs.m_out.astype(dtype)
    opt = Adam(params)
    rng = np.random.default_rng([config.seed, 1])
    history = []
    S = len(classes)
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = rng.permutation(S)
        tot_loss = 0.0
        correct = 0
        for bi, start in enumerate(range(0, S, config.batch)):
            idx = order[start:start + config.batch]
            batch = graphs.take(idx)
            try:
                val, grads, tr = loss_and_grad(params, batch, targets[idx], config.prop_steps, config.l2_lambda)
            except FloatingPointError as exc:
                raise FloatingPointError(f"epoch {epoch} batch {bi}: {exc}") from None
            if not np.isfinite(val):
                raise FloatingPointError(f"non-finite loss at epoch {epoch} batch {bi}")
            tot_loss += val * len(idx)
            correct += int((tr.probs.argmax(axis=1) == targets[idx]).sum())
            opt.step(params, grads, lr)
        rec = {"epoch": epoch, "lr": lr, "loss": tot_loss / S, "accuracy": correct / S}
        history.append(rec)
        log.info("epoch %d lr %.3g loss %.5f acc %.4f", epoch, lr, rec["loss"], rec["accuracy"])
        if callback is not None:
            callback(rec)
        if rec["loss"] < config.tol:
            break
    return params, history


def evaluate(params: ModelParams, classes, targets, config: TrainConfig, chunk: int = 1024) -> float:
    """Top-1 next-delta accuracy."""
    classes = np.asarray(classes, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    if len(classes) == 0:
        return 0.0
    graphs = build_graph_batch(classes, config.w_s)
    hits = 0
    for start in range(0, len(classes), chunk):
        idx = np.arange(start, min(start + chunk, len(classes)))
        cls, _ = predict_batch(params, graphs.take(idx), config.prop_steps)
        hits += int((cls == targets[idx]).sum())
    return hits / len(classes)


# ---------------------------------------------------------------- checkpoints

MAGIC = b"SGDPCKPT"
VERSION = 1


class VocabMismatchError(ValueError):
    pass


def save_checkpoint(path, params: ModelParams, config: TrainConfig, vocab_hash: str, extra: dict | None = None) -> None:
    """Binary checkpoint plus ``<path>.json`` sidecar carrying the vocabulary hash."""
    header = json.dumps({"config": asdict(config), "num_classes": params.num_classes,
                         "tensors": list(PARAM_NAMES)}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        for t in params.tensors():
            fh.write(np.ascontiguousarray(t, dtype="<f4").tobytes())
    sidecar = {"vocab_hash": vocab_hash, "num_classes": params.num_classes, "config": asdict(config)}
    sidecar.update(extra or {})
    with open(f"{path}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_checkpoint(path, vocab_hash: str | None = None, dtype="float64"):
    """Returns (params, config, sidecar). Refuses a mismatched vocabulary hash."""
    with open(f"{path}.json", "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    if vocab_hash is not None and sidecar["vocab_hash"] != vocab_hash:
        raise VocabMismatchError(
            f"checkpoint vocabulary {sidecar['vocab_hash'][:12]} does not match {vocab_hash[:12]}")
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(hlen))
        config = TrainConfig(**header["config"])
        shapes = param_shapes(header["num_classes"], config.d)
        tensors = {}
        for name in header["tensors"]:
            count = int(np.prod(shapes[name]))
            buf = fh.read(4 * count)
            if len(buf) != 4 * count:
                raise ValueError(f"{path}: truncated at tensor {name}")
            tensors[name] = np.frombuffer(buf, dtype="<f4").reshape(shapes[name]).astype(dtype)
    return ModelParams(**tensors), config, sidecar
