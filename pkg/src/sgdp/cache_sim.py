"""Trace-driven LRU cache simulation with HR@N / EPR@N accounting.

Per access: demand lookup (hit refreshes recency; the first hit on an unused
prefetched block counts as a correct prefetch; a miss demand-fills the block,
evicting the LRU entry), then the prefetcher observes the access and every
predicted block not already resident is inserted at the MRU end as an unused
prefetch. Prefetching a resident block is a no-op and is not counted.
"""
from __future__ import annotations

import csv
import io
import json
from collections import OrderedDict
from dataclasses import asdict, dataclass

from .prefetchers import NoPrefetcher, Prefetcher

REPORT_COLUMNS = ("prefetcher", "cache_size", "steps", "hits", "misses",
                  "prefetch_issued", "prefetch_correct", "hr", "epr")

ACCOUNTING = {
    "demand_fill": True,
    "epr_first_use": True,
    "resident_prefetch_counted": False,
    "prefetch_insert_position": "mru",
}


class LruCache:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("cache capacity must be >= 1")
        self.capacity = capacity
        self.entries: OrderedDict[int, list] = OrderedDict()  # lba -> [prefetched, used]

    def __contains__(self, lba):
        return lba in self.entries

    def __len__(self):
        return len(self.entries)

    def access(self, lba: int) -> tuple[bool, bool]:
        """Demand access. Returns (hit, first use of a prefetched block)."""
        ent = self.entries.get(lba)
        if ent is not None:
            self.entries.move_to_end(lba)
            first_use = ent[0] and not ent[1]
            ent[1] = True
            return True, first_use
        self._insert(lba, prefetched=False)
        return False, False

    def prefetch(self, lba: int) -> bool:
        """Insert a prefetched block; False (and no recency change) if already resident."""
        if lba in self.entries:
            return False
        self._insert(lba, prefetched=True)
        return True

    def _insert(self, lba, prefetched):
        if len(self.entries) >= self.capacity:
            self.entries.popitem(last=False)
        self.entries[lba] = [prefetched, False]


@dataclass
class SimReport:
    prefetcher: str
    cache_size: int
    steps: int = 1
    hits: int = 0
    misses: int = 0
    prefetch_issued: int = 0
    prefetch_correct: int = 0

    @property
    def hr(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    @property
    def epr(self) -> float:
        return self.prefetch_correct / self.prefetch_issued if self.prefetch_issued else 0.0

    def row(self) -> dict:
        out = asdict(self)
        out["hr"] = self.hr
        out["epr"] = self.epr
        return out


def _lba_ts(acc):
    if hasattr(acc, "lba"):
        return acc.lba, acc.timestamp
    return int(acc), 0


def simulate(accesses, prefetcher: Prefetcher | None, cache_size: int, steps: int | None = None,
             trace: list | None = None) -> SimReport:
    """Run one LRU simulation. ``accesses`` holds BlockAccess objects or bare lbas.

    When ``trace`` is a list, the per-access hit flags are appended to it.
    """
    if prefetcher is None:
        prefetcher = NoPrefetcher()
    if steps is not None:
        prefetcher.steps = steps
    prefetcher.reset()
    cache = LruCache(cache_size)
    rep = SimReport(prefetcher.name, cache_size, prefetcher.steps)
    for acc in accesses:
        lba, ts = _lba_ts(acc)
        hit, first_use = cache.access(lba)
        if hit:
            rep.hits += 1
            rep.prefetch_correct += first_use
        else:
            rep.misses += 1
        if trace is not None:
            trace.append(hit)
        for p in prefetcher.observe(lba, ts):
            if cache.prefetch(p):
                rep.prefetch_issued += 1
    return rep


def sweep(accesses, prefetcher: Prefetcher | None, cache_sizes, steps: int | None = None) -> list[SimReport]:
    """Independent simulations per cache size, each with a fresh cache and reset prefetcher."""
    sizes = list(cache_sizes)
    if not sizes:
        raise ValueError("cache_sizes must be non-empty")
    accesses = list(accesses)
    return [simulate(accesses, prefetcher, n, steps) for n in sizes]


# 20-point cache size sweep: 5, 10..100 by 10, 200..1000 by 100.
SWEEP_SIZES = [5, *range(10, 101, 10), *range(200, 1001, 100)]


def reports_to_csv(reports, manifest: dict | None = None) -> str:
    buf = io.StringIO()
    if manifest is not None:
        buf.write("# manifest=" + json.dumps(manifest, sort_keys=True) + "\n")
    w = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        row = r.row() if isinstance(r, SimReport) else r
        w.writerow({k: row[k] for k in REPORT_COLUMNS})
    return buf.getvalue()


def reports_to_json(reports, manifest: dict | None = None) -> str:
    rows = [r.row() if isinstance(r, SimReport) else r for r in reports]
    return json.dumps({"manifest": manifest, "accounting": ACCOUNTING, "rows": rows}, indent=2, sort_keys=True)
