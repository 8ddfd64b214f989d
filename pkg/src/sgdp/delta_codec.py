"""LBA deltas, the top-K delta vocabulary, and gap/sliding-window stream splitting."""
from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

NO_PREFETCH = 0


def compute_deltas(lbas: Sequence[int]) -> list[int]:
    if len(lbas) < 2:
        raise ValueError("sequence too short")
    return [int(b) - int(a) for a, b in zip(lbas[:-1], lbas[1:])]


def _tie_key(item):
    delta, count = item
    return (-count, abs(delta), delta)


@dataclass
class DeltaVocab:
    """Top-K delta classes. Class 0 is reserved for "no prefetch"."""

    k: int
    class_of: dict[int, int]
    delta_of: list  # index 0 is None
    counts: list[int] = field(default_factory=list)  # counts[c] for c >= 1; counts[0] = out-of-vocab total
    requested_k: int | None = None

    @property
    def num_classes(self) -> int:
        return self.k + 1

    def encode(self, delta: int) -> int:
        return self.class_of.get(int(delta), NO_PREFETCH)

    def decode(self, class_id: int):
        if not 0 <= class_id <= self.k:
            raise IndexError(f"class id {class_id} outside [0, {self.k}]")
        return self.delta_of[class_id]

    def coverage(self) -> float:
        """Fraction of counted deltas that fall inside the vocabulary."""
        total = sum(self.counts)
        return sum(self.counts[1:]) / total if total else 0.0

    def to_csv(self) -> str:
        rows = ["class_id,raw_delta,count"]
        rows += [f"{c},{self.delta_of[c]},{self.counts[c]}" for c in range(1, self.k + 1)]
        return "\n".join(rows) + "\n"

    def hash(self) -> str:
        # memoized: the vocabulary is not mutated after construction
        if "_hash" not in self.__dict__:
            self.__dict__["_hash"] = hashlib.sha256(self.to_csv().encode()).hexdigest()
        return self.__dict__["_hash"]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "DeltaVocab":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [l.strip() for l in fh if l.strip()]
        if lines[0] != "class_id,raw_delta,count":
            raise ValueError(f"{path}: bad vocab header {lines[0]!r}")
        delta_of: list = [None]
        counts = [0]
        for i, line in enumerate(lines[1:], start=1):
            c, d, n = (int(x) for x in line.split(","))
            if c != i:
                raise ValueError(f"{path}: class ids must be 1..K in order")
            delta_of.append(d)
            counts.append(n)
        k = len(delta_of) - 1
        return cls(k, {d: c for c, d in enumerate(delta_of) if c}, delta_of, counts)


def build_vocab(deltas: Iterable[int], k: int) -> DeltaVocab:
    if k < 1:
        raise ValueError("k must be >= 1")
    freq = Counter(int(d) for d in deltas)
    if not freq:
        raise ValueError("deltas must be non-empty")
    ranked = sorted(freq.items(), key=_tie_key)
    top = ranked[:k]
    delta_of = [None] + [d for d, _ in top]
    counts = [sum(n for _, n in ranked[k:])] + [n for _, n in top]
    return DeltaVocab(
        k=len(top),
        class_of={d: c for c, d in enumerate(delta_of) if c},
        delta_of=delta_of,
        counts=counts,
        requested_k=k,
    )


@dataclass
class DeltaStream:
    classes: np.ndarray  # (n,) encoded deltas
    anchor_lba: int
    target_class: int
    stream_id: int = 0
    start_index: int = 0  # index of the first access feeding this window


def segment_bounds(timestamps: Sequence[int], gap_limit) -> list[tuple[int, int]]:
    """Half-open [start, end) index ranges of runs whose successive gaps are <= gap_limit."""
    if len(timestamps) == 0:
        return []
    ts = np.asarray(timestamps, dtype=np.int64)
    cuts = np.nonzero(np.diff(ts) > gap_limit)[0] + 1
    edges = [0, *cuts.tolist(), len(timestamps)]
    return list(zip(edges[:-1], edges[1:]))


def split_streams(accesses, vocab, gap_limit, window: int = 10, stride: int = 1,
                  stats: dict | None = None, first_id: int = 0) -> list[DeltaStream]:
    """Cut accesses into fixed-length windows of encoded deltas.

    ``gap_limit`` is in the trace's own timestamp unit; pass ``float('inf')``
    to disable splitting. Segments with fewer than ``window + 1`` deltas give
    no streams and are counted in ``stats['short_segments']``.
    """
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    accesses = list(accesses)
    streams = []
    short = 0
    bounds = segment_bounds([a.timestamp for a in accesses], gap_limit)
    sid = first_id
    for lo, hi in bounds:
        if hi - lo < window + 2:
            short += 1
            continue
        lbas = [a.lba for a in accesses[lo:hi]]
        codes = np.array([vocab.encode(d) for d in compute_deltas(lbas)], dtype=np.int64)
        for i in range(0, len(codes) - window, stride):
            streams.append(DeltaStream(
                classes=codes[i:i + window].copy(),
                anchor_lba=lbas[i + window],
                target_class=int(codes[i + window]),
                stream_id=sid,
                start_index=lo + i,
            ))
            sid += 1
    if stats is not None:
        stats["segments"] = len(bounds)
        stats["short_segments"] = short
        stats["streams"] = len(streams)
    return streams


def stack_streams(streams: Sequence[DeltaStream]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(classes (S, n), targets (S,), anchors (S,)) as int64 arrays."""
    if not streams:
        return np.zeros((0, 0), np.int64), np.zeros(0, np.int64), np.zeros(0, np.int64)
    classes = np.stack([s.classes for s in streams]).astype(np.int64)
    targets = np.array([s.target_class for s in streams], dtype=np.int64)
    anchors = np.array([s.anchor_lba for s in streams], dtype=np.int64)
    return classes, targets, anchors


# streams file: u32 n, then per stream u16 classes x n, u16 target, u64 anchor (little-endian)
def write_streams(path, streams: Sequence[DeltaStream], window: int) -> None:
    rec = np.dtype([("classes", "<u2", (window,)), ("target", "<u2"), ("anchor", "<u8")])
    arr = np.empty(len(streams), dtype=rec)
    for i, s in enumerate(streams):
        if len(s.classes) != window:
            raise ValueError("stream length does not match window")
        arr[i] = (s.classes, s.target_class, s.anchor_lba)
    with open(path, "wb") as fh:
        fh.write(np.uint32(window).astype("<u4").tobytes())
        fh.write(arr.tobytes())


def read_streams(path) -> list[DeltaStream]:
    with open(path, "rb") as fh:
        window = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        rec = np.dtype([("classes", "<u2", (window,)), ("target", "<u2"), ("anchor", "<u8")])
        arr = np.frombuffer(fh.read(), dtype=rec)
    return [
        DeltaStream(np.asarray(r["classes"], dtype=np.int64), int(r["anchor"]), int(r["target"]), stream_id=i)
        for i, r in enumerate(arr)
    ]
