"""Two configuration-level variants of the base prefetcher.

* large vocabulary: the same pipeline with the top-10000 deltas.
* page-partitioned: accesses are split by 64MB page (8192 blocks), streams and
  deltas are formed inside each page, and the vocabulary is the fixed
  enumeration of every in-page delta -8191..8191 (class 0 kept as
  "no prefetch").
"""
from __future__ import annotations

import hashlib
from collections import defaultdict
from dataclasses import dataclass, replace

from .delta_codec import NO_PREFETCH, split_streams
from .model import TrainConfig
from .prefetchers import Prefetcher, SgdpModel, WindowState, _Predictor, rolling_predict

LARGE_K = 10_000
PAGE_BLOCKS = 8192


def make_sgdp_l_config(base: TrainConfig) -> TrainConfig:
    return replace(base, k=LARGE_K, variant="large")


def make_sgdp_p_config(base: TrainConfig) -> TrainConfig:
    return replace(base, k=PageVocab(PAGE_BLOCKS).k, variant="page")


@dataclass(frozen=True)
class PageConfig:
    page_size_blocks: int = PAGE_BLOCKS

    def page_of(self, lba: int) -> int:
        return lba // self.page_size_blocks


class PageVocab:
    """Fixed in-page delta classes: delta d in [-(P-1), P-1] -> class d + P."""

    def __init__(self, page_size_blocks: int = PAGE_BLOCKS):
        self.page_size_blocks = page_size_blocks
        self.max_delta = page_size_blocks - 1
        self.k = 2 * self.max_delta + 1
        self.requested_k = self.k

    @property
    def num_classes(self) -> int:
        return self.k + 1

    def encode(self, delta: int) -> int:
        delta = int(delta)
        if -self.max_delta <= delta <= self.max_delta:
            return delta + self.page_size_blocks
        return NO_PREFETCH

    def decode(self, class_id: int):
        if not 0 <= class_id <= self.k:
            raise IndexError(f"class id {class_id} outside [0, {self.k}]")
        if class_id == NO_PREFETCH:
            return None
        return class_id - self.page_size_blocks

    def coverage(self) -> float:
        return 1.0

    def hash(self) -> str:
        return hashlib.sha256(f"page-vocab:{self.page_size_blocks}".encode()).hexdigest()


def partition_pages(accesses, page_cfg: PageConfig = PageConfig()) -> dict[int, list]:
    """Stable partition of accesses by page id, in order of first appearance."""
    pages: dict[int, list] = defaultdict(list)
    for a in accesses:
        pages[page_cfg.page_of(a.lba)].append(a)
    return dict(pages)


def page_streams(accesses, vocab: PageVocab, gap_limit, window: int = 10, stride: int = 1,
                 stats: dict | None = None):
    """Streams built independently inside every page, concatenated by page id."""
    page_cfg = PageConfig(vocab.page_size_blocks)
    out = []
    short = 0
    pages = partition_pages(accesses, page_cfg)
    for pid in sorted(pages):
        st: dict = {}
        out += split_streams(pages[pid], vocab, gap_limit, window, stride, stats=st, first_id=len(out))
        short += st["short_segments"]
    if stats is not None:
        stats.update(pages=len(pages), short_segments=short, streams=len(out))
    return out


class PagedSgdpPrefetcher(Prefetcher):
    """One online window per page; predictions never leave the anchor's page."""

    name = "sgdp_p"

    def __init__(self, model: SgdpModel, vocab: PageVocab | None = None, steps: int = 1, gap_limit=None):
        self.vocab = vocab or PageVocab()
        self.page_cfg = PageConfig(self.vocab.page_size_blocks)
        self.model, self.steps = model, steps
        self.gap_limit = model.config.gap_ns if gap_limit is None else gap_limit
        self.predictor = _Predictor(model, self.vocab)
        self.reset()

    def reset(self):
        self.states: dict[int, WindowState] = {}

    def observe(self, lba, timestamp=0):
        pid = self.page_cfg.page_of(lba)
        state = self.states.get(pid)
        if state is None:
            state = self.states[pid] = WindowState(self.model.config.window, self.gap_limit)
        state.push(lba, timestamp, self.vocab)
        if not state.ready:
            return []
        in_page = lambda x: self.page_cfg.page_of(x) == pid
        return rolling_predict(self.predictor, self.vocab, state.codes, lba, self.steps, lba_ok=in_page)
