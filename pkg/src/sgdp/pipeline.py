"""Glue between the stages: dataset building, fitting and prefetcher construction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .delta_codec import build_vocab, compute_deltas, segment_bounds, split_streams, stack_streams
from .model import TrainConfig, evaluate, train
from .prefetchers import SgdpModel, SgdpPrefetcher, make_baseline
from .variants import PagedSgdpPrefetcher, PageVocab, page_streams

N_FOLDS = 10


def gap_ticks(config: TrainConfig, unit_ns: float) -> float:
    return config.gap_ns / unit_ns


def fold_bounds(length: int, fold: int, n_folds: int = N_FOLDS) -> tuple[int, int]:
    """[lo, hi) of the ``fold``-th of ``n_folds`` contiguous chronological chunks."""
    if not 0 <= fold < n_folds:
        raise ValueError(f"fold must be in 0..{n_folds - 1}")
    edges = np.linspace(0, length, n_folds + 1).astype(int)
    return int(edges[fold]), int(edges[fold + 1])


def without_fold(items, fold: int | None, n_folds: int = N_FOLDS) -> list:
    items = list(items)
    if fold is None:
        return items
    lo, hi = fold_bounds(len(items), fold, n_folds)
    return items[:lo] + items[hi:]


def only_fold(items, fold: int | None, n_folds: int = N_FOLDS) -> list:
    items = list(items)
    if fold is None:
        return items
    lo, hi = fold_bounds(len(items), fold, n_folds)
    return items[lo:hi]


def segment_deltas(accesses, gap_limit) -> list[int]:
    """All deltas inside gap-split segments (deltas never cross a split)."""
    lbas = [a.lba for a in accesses]
    out: list[int] = []
    for lo, hi in segment_bounds([a.timestamp for a in accesses], gap_limit):
        if hi - lo >= 2:
            out += compute_deltas(lbas[lo:hi])
    return out


@dataclass
class Dataset:
    vocab: object
    streams: list
    stats: dict = field(default_factory=dict)

    def arrays(self):
        return stack_streams(self.streams)


def build_dataset(accesses, config: TrainConfig, unit_ns: float = 1.0, vocab=None) -> Dataset:
    """Vocabulary (unless given) and windows for one access sequence under ``config``."""
    accesses = list(accesses)
    gap = gap_ticks(config, unit_ns)
    stats: dict = {"accesses": len(accesses), "distinct_lbas": len({a.lba for a in accesses})}
    if config.variant == "page":
        vocab = vocab or PageVocab()
        streams = page_streams(accesses, vocab, gap, config.window, config.stride, stats=stats)
    else:
        if vocab is None:
            deltas = segment_deltas(accesses, gap)
            if not deltas:
                raise ValueError("trace has no deltas inside any segment")
            vocab = build_vocab(deltas, config.k)
        streams = split_streams(accesses, vocab, gap, config.window, config.stride, stats=stats)
    stats["k"] = vocab.k
    stats["requested_k"] = getattr(vocab, "requested_k", vocab.k)
    stats["coverage"] = vocab.coverage()
    return Dataset(vocab, streams, stats)


def fit(dataset: Dataset, config: TrainConfig, callback=None) -> tuple[SgdpModel, list]:
    classes, targets, _ = dataset.arrays()
    params, history = train(classes, targets, config, dataset.vocab.num_classes, callback=callback)
    return SgdpModel(params, config, dataset.vocab.hash()), history


def accuracy(model: SgdpModel, dataset: Dataset) -> float:
    classes, targets, _ = dataset.arrays()
    return evaluate(model.params, classes, targets, model.config)


def make_prefetcher(name: str, model: SgdpModel | None = None, vocab=None, steps: int = 1,
                    unit_ns: float = 1.0):
    """Prefetcher by CLI name: none | naive | stride | sgdp | sgdp_l | sgdp_p."""
    if name in ("none", "naive", "stride"):
        return make_baseline(name)
    if model is None:
        raise ValueError(f"prefetcher {name!r} needs a trained model")
    want = {"sgdp": "base", "sgdp_l": "large", "sgdp_p": "page"}.get(name)
    if want is None:
        raise ValueError(f"unknown prefetcher {name!r}")
    if model.config.variant != want:
        raise ValueError(f"prefetcher {name!r} needs a {want!r} model, got {model.config.variant!r}")
    gap = gap_ticks(model.config, unit_ns)
    if name == "sgdp_p":
        return PagedSgdpPrefetcher(model, vocab or PageVocab(), steps, gap)
    if vocab is None:
        raise ValueError(f"prefetcher {name!r} needs the model's vocabulary")
    return SgdpPrefetcher(model, vocab, steps, gap, name=name)
