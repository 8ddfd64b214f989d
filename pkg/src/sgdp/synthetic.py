"""Synthetic block traces with known structure, for tests and demos."""
from __future__ import annotations

import numpy as np

from .trace_ingest import BlockAccess, Op


def interleaved_readers(n_accesses: int, schedule: str = "AABCCB", bases=(0, 40_000, 90_000),
                        tick_ns: int = 1_000, burst_gap_ns: int = 1_000_000, burst_len: int = 300,
                        noise: float = 0.0, seed: int = 0) -> list[BlockAccess]:
    """Concurrent sequential readers merged into one access sequence.

    Reader ``i`` (letter ``chr(ord('A') + i)`` in ``schedule``) reads blocks
    ``bases[i], bases[i] + 1, ...``; the schedule repeats, so the merged delta
    sequence is periodic and the next delta is a function of the recent
    window. Accesses are ``tick_ns`` apart, with a ``burst_gap_ns`` pause
    every ``burst_len`` accesses. With ``noise > 0`` that fraction of accesses
    is replaced by uniformly random far-away blocks.
    """
    rng = np.random.default_rng(seed)
    pos = [0] * len(bases)
    out = []
    ts = 0
    for i in range(n_accesses):
        if i and i % burst_len == 0:
            ts += burst_gap_ns
        else:
            ts += tick_ns
        reader = ord(schedule[i % len(schedule)]) - ord("A")
        lba = bases[reader] + pos[reader]
        pos[reader] += 1
        if noise and rng.random() < noise:
            lba = int(rng.integers(10_000_000, 20_000_000))
        out.append(BlockAccess(ts, lba, Op.READ))
    return out


def sequential(n: int, start: int = 0, tick_ns: int = 1_000) -> list[BlockAccess]:
    return [BlockAccess((i + 1) * tick_ns, start + i, Op.READ) for i in range(n)]
