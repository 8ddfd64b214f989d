"""Block I/O trace parsing and 8KB block normalization.

Two input formats are understood:

* MSRC CSV, 7 fields per line:
  ``Timestamp,Hostname,DiskNumber,Type,Offset,Size,ResponseTime``
  with timestamps in 100ns ticks.
* A generic CSV ``timestamp,lba,op`` preceded by a ``#unit=<unit>`` header,
  where lba is already a block index.
"""
from __future__ import annotations

import enum
import io
import os
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

BLOCK_SIZE = 8192
MSRC_TICK_NS = 100
_U64_MAX = 2**64 - 1

UNIT_NS = {"ns": 1, "100ns": 100, "us": 1_000, "ms": 1_000_000, "s": 1_000_000_000}


class Op(enum.IntEnum):
    READ = 0
    WRITE = 1

    @classmethod
    def parse(cls, text: str) -> "Op":
        t = text.strip().lower()
        if t in ("read", "r"):
            return cls.READ
        if t in ("write", "w"):
            return cls.WRITE
        raise ValueError(f"unknown op {text!r}")


class TraceParseError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class TraceRecord:
    timestamp: int
    host: str
    disk_id: int
    op: Op
    offset_bytes: int
    size_bytes: int
    latency: int = 0


@dataclass(frozen=True)
class BlockAccess:
    timestamp: int
    lba: int
    op: Op = Op.READ


def _lines(source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
        return
    if isinstance(source, (bytes, bytearray)):
        source = io.StringIO(source.decode("utf-8"))
    for line in source:
        yield line.decode("utf-8") if isinstance(line, (bytes, bytearray)) else line


def _parse_msrc_line(line: str, line_no: int) -> TraceRecord:
    fields = line.strip().split(",")
    if len(fields) != 7:
        raise TraceParseError(line_no, f"expected 7 fields, got {len(fields)}")
    try:
        ts, host, disk, op, offset, size, latency = fields
        rec = TraceRecord(
            timestamp=int(ts),
            host=host,
            disk_id=int(disk),
            op=Op.parse(op),
            offset_bytes=int(offset),
            size_bytes=int(size),
            latency=int(latency),
        )
    except ValueError as exc:
        raise TraceParseError(line_no, str(exc)) from None
    if rec.offset_bytes < 0:
        raise TraceParseError(line_no, "negative offset")
    if rec.size_bytes < 1:
        raise TraceParseError(line_no, "size must be >= 1")
    if rec.offset_bytes + rec.size_bytes > _U64_MAX:
        raise TraceParseError(line_no, "offset + size overflows 64 bits")
    return rec


def parse_msrc_csv(source, lenient: bool = False, errors: list | None = None) -> list[TraceRecord]:
    """Parse an MSRC trace into records, in file order.

    A malformed line raises :class:`TraceParseError` unless ``lenient`` is set,
    in which case it is skipped (and appended to ``errors`` when given).
    """
    records = []
    for line_no, line in enumerate(_lines(source), start=1):
        if not line.strip():
            continue
        try:
            records.append(_parse_msrc_line(line, line_no))
        except TraceParseError as exc:
            if not lenient:
                raise
            if errors is not None:
                errors.append(exc)
    return records


def parse_generic_csv(source, lenient: bool = False, errors: list | None = None) -> tuple[list[BlockAccess], int]:
    """Parse ``#unit=..`` + ``timestamp,lba,op`` rows. Returns (accesses, ns per tick)."""
    accesses = []
    unit_ns = None
    for line_no, line in enumerate(_lines(source), start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            if s.startswith("#unit=") and unit_ns is None:
                unit = s[len("#unit="):].strip()
                if unit not in UNIT_NS:
                    raise TraceParseError(line_no, f"unknown unit {unit!r}")
                unit_ns = UNIT_NS[unit]
            continue
        fields = s.split(",")
        try:
            if len(fields) != 3:
                raise TraceParseError(line_no, f"expected 3 fields, got {len(fields)}")
            try:
                acc = BlockAccess(int(fields[0]), int(fields[1]), Op.parse(fields[2]))
            except ValueError as exc:
                raise TraceParseError(line_no, str(exc)) from None
            if acc.lba < 0:
                raise TraceParseError(line_no, "negative lba")
        except TraceParseError as exc:
            if not lenient:
                raise
            if errors is not None:
                errors.append(exc)
            continue
        accesses.append(acc)
    if unit_ns is None:
        raise TraceParseError(1, "missing '#unit=' header")
    return accesses, unit_ns


def normalize_to_blocks(records: Iterable[TraceRecord], block_size: int = BLOCK_SIZE) -> list[BlockAccess]:
    if block_size <= 0:
        raise ValueError("block_size must be positive")
    out = []
    for rec in records:
        first = rec.offset_bytes // block_size
        last = (rec.offset_bytes + rec.size_bytes - 1) // block_size
        out.extend(BlockAccess(rec.timestamp, lba, rec.op) for lba in range(first, last + 1))
    return out


def filter_ops(accesses: Iterable[BlockAccess], ops: str = "all") -> list[BlockAccess]:
    if ops == "all":
        return list(accesses)
    want = {"read": Op.READ, "write": Op.WRITE}[ops]
    return [a for a in accesses if a.op == want]


def read_trace(path, lenient: bool = False, block_size: int = BLOCK_SIZE, errors: list | None = None) -> tuple[list[BlockAccess], int]:
    """Load either trace format from ``path``; returns (accesses, ns per tick).

    Files whose first non-empty line starts with ``#unit=`` are read as the
    generic format, everything else as MSRC.
    """
    with open(path, "r", encoding="utf-8") as fh:
        head = ""
        for line in fh:
            if line.strip():
                head = line.strip()
                break
    if head.startswith("#unit="):
        return parse_generic_csv(path, lenient=lenient, errors=errors)
    records = parse_msrc_csv(path, lenient=lenient, errors=errors)
    return normalize_to_blocks(records, block_size), MSRC_TICK_NS


def write_generic_csv(path, accesses: Iterable[BlockAccess], unit: str = "ns") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#unit={unit}\n")
        for a in accesses:
            fh.write(f"{a.timestamp},{a.lba},{'Write' if a.op == Op.WRITE else 'Read'}\n")


# binary access cache: little-endian u64 ts, u64 lba, u8 op, no padding
ACCESS_DTYPE = np.dtype([("ts", "<u8"), ("lba", "<u8"), ("op", "u1")])


def write_access_cache(path, accesses: Iterable[BlockAccess]) -> None:
    accesses = list(accesses)
    arr = np.empty(len(accesses), dtype=ACCESS_DTYPE)
    for i, a in enumerate(accesses):
        arr[i] = (a.timestamp, a.lba, int(a.op))
    arr.tofile(path)


def read_access_cache(path) -> list[BlockAccess]:
    arr = np.fromfile(path, dtype=ACCESS_DTYPE)
    return [BlockAccess(int(t), int(l), Op(int(o))) for t, l, o in arr]
