"""Prefetchers behind one interface: ``observe(lba, timestamp) -> list of lbas``.

Each instance is stateful and single-threaded; ``reset()`` returns it to the
freshly constructed state.
"""
from __future__ import annotations

from collections import OrderedDict, deque
from dataclasses import dataclass

import numpy as np

from .delta_codec import NO_PREFETCH
from .model import GraphBatch, ModelParams, TrainConfig, VocabMismatchError, predict_batch


class Prefetcher:
    name = "base"
    steps = 1

    def reset(self) -> None:
        pass

    def observe(self, lba: int, timestamp: int = 0) -> list[int]:
        raise NotImplementedError


class NoPrefetcher(Prefetcher):
    name = "none"

    def observe(self, lba, timestamp=0):
        return []


def naive_next(prev_lba, prev_delta) -> list[int]:
    if prev_lba is None or prev_delta is None:
        return []
    nxt = prev_lba + prev_delta
    return [nxt] if nxt >= 0 else []


class NaivePrefetcher(Prefetcher):
    """Repeat the last delta of the whole access sequence."""

    name = "naive"

    def __init__(self):
        self.reset()

    def reset(self):
        self.last = None
        self.delta = None

    def observe(self, lba, timestamp=0):
        if self.last is not None:
            self.delta = lba - self.last
        self.last = lba
        return naive_next(self.last, self.delta)


class StrideTable:
    """128 slots, each a ring of the last 3 lbas mapped to it."""

    def __init__(self, slots: int = 128, depth: int = 3, shift: int = 12):
        self.slots, self.depth, self.shift = slots, depth, shift
        self.rings = [deque(maxlen=depth) for _ in range(slots)]

    def slot_of(self, lba: int) -> int:
        return hash(lba >> self.shift) % self.slots


def stride_observe_and_predict(table: StrideTable, lba: int) -> list[int]:
    ring = table.rings[table.slot_of(lba)]
    ring.append(lba)
    if len(ring) < 3:
        return []
    a, b, c = ring[-3], ring[-2], ring[-1]
    s = b - a
    if s != 0 and c - b == s and c + s >= 0:
        return [c + s]
    return []


class StridePrefetcher(Prefetcher):
    name = "stride"

    def __init__(self, slots: int = 128, shift: int = 12):
        self.slots, self.shift = slots, shift
        self.reset()

    def reset(self):
        self.table = StrideTable(self.slots, 3, self.shift)

    def observe(self, lba, timestamp=0):
        return stride_observe_and_predict(self.table, lba)


# ------------------------------------------------------------------ SGDP

@dataclass
class SgdpModel:
    params: ModelParams
    config: TrainConfig
    vocab_hash: str


class WindowState:
    """Online mirror of the offline gap split + sliding window."""

    def __init__(self, window: int, gap_limit):
        self.window, self.gap_limit = window, gap_limit
        self.clear()

    def clear(self):
        self.codes = deque(maxlen=self.window)
        self.last_lba = None
        self.last_ts = None

    def push(self, lba: int, timestamp, vocab) -> None:
        if self.last_ts is not None and timestamp - self.last_ts > self.gap_limit:
            self.codes.clear()
            self.last_lba = None
        if self.last_lba is not None:
            self.codes.append(vocab.encode(lba - self.last_lba))
        self.last_lba = lba
        self.last_ts = timestamp

    @property
    def ready(self) -> bool:
        return len(self.codes) == self.window


class _Predictor:
    """Memoized argmax of the model for a given window of classes."""

    def __init__(self, model: SgdpModel, vocab, memo_size: int = 200_000):
        vh = vocab.hash()
        if model.vocab_hash != vh:
            raise VocabMismatchError(f"model vocabulary {model.vocab_hash[:12]} does not match {vh[:12]}")
        self.model, self.vocab = model, vocab
        self.memo: OrderedDict = OrderedDict()
        self.memo_size = memo_size

    def __call__(self, codes) -> int:
        key = tuple(codes)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        cfg = self.model.config
        gb = GraphBatch.from_classes(np.array(key, dtype=np.int64)[None], cfg.w_s)
        cls, _ = predict_batch(self.model.params, gb, cfg.prop_steps)
        out = int(cls[0])
        self.memo[key] = out
        if len(self.memo) > self.memo_size:
            self.memo.popitem(last=False)
        return out


def _as_predictor(model, vocab):
    return _Predictor(model, vocab) if isinstance(model, SgdpModel) else model


def rolling_predict(model, vocab, codes, anchor_lba: int, steps: int = 1, lba_ok=None) -> list[int]:
    """Feed each predicted class back into the window for up to ``steps`` lbas.

    ``model`` is an :class:`SgdpModel` or an already built predictor. Stops at
    the first class-0 prediction, or at an lba rejected by ``lba_ok``;
    duplicates are dropped keeping first occurrence.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    predictor = _as_predictor(model, vocab)
    window = deque(codes, maxlen=len(codes))
    out: list[int] = []
    anchor = anchor_lba
    for _ in range(steps):
        cls = predictor(window)
        if cls == NO_PREFETCH:
            break
        anchor = anchor + vocab.decode(cls)
        if anchor < 0 or (lba_ok is not None and not lba_ok(anchor)):
            break
        if anchor not in out:
            out.append(anchor)
        window.append(cls)
    return out


def sgdp_next(model, vocab, window_state: WindowState, anchor_lba: int) -> list[int]:
    if not window_state.ready:
        return []
    return rolling_predict(model, vocab, window_state.codes, anchor_lba, 1)


class SgdpPrefetcher(Prefetcher):
    """Learned next-delta prefetcher; ``steps > 1`` switches to rolling prediction.

    ``gap_limit`` is in trace timestamp units (default: the model's gap_ns at
    1 ns per tick).
    """

    name = "sgdp"

    def __init__(self, model: SgdpModel, vocab, steps: int = 1, gap_limit=None, name: str | None = None):
        self.model, self.vocab, self.steps = model, vocab, steps
        self.gap_limit = model.config.gap_ns if gap_limit is None else gap_limit
        self.predictor = _Predictor(model, vocab)
        if name:
            self.name = name
        self.reset()

    def reset(self):
        self.state = WindowState(self.model.config.window, self.gap_limit)

    def observe(self, lba, timestamp=0):
        self.state.push(lba, timestamp, self.vocab)
        if not self.state.ready:
            return []
        return rolling_predict(self.predictor, self.vocab, self.state.codes, lba, self.steps)


PREFETCHER_NAMES = ("none", "naive", "stride", "sgdp", "sgdp_l", "sgdp_p")


def make_baseline(name: str) -> Prefetcher:
    try:
        return {"none": NoPrefetcher, "naive": NaivePrefetcher, "stride": StridePrefetcher}[name]()
    except KeyError:
        raise ValueError(f"unknown baseline prefetcher {name!r}") from None
