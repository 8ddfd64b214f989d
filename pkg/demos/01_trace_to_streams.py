"""
From a raw block trace to encoded delta windows
===============================================

A few MSRC-style request lines are expanded into 8KB block accesses, turned
into address deltas, capped to a small vocabulary and cut into windows.
"""
import io

from sgdp.delta_codec import build_vocab, compute_deltas, split_streams
from sgdp.trace_ingest import normalize_to_blocks, parse_msrc_csv

raw = """\
1000,hm,1,Read,0,16384,40
1010,hm,1,Read,16384,8192,40
1020,hm,1,Write,24576,8192,40
1030,hm,1,Read,32768,8192,40
1040,hm,1,Read,819200,8192,40
1050,hm,1,Read,40960,8192,40
1060,hm,1,Read,49152,8192,40
9000,hm,1,Read,57344,8192,40
9010,hm,1,Read,65536,8192,40
"""

records = parse_msrc_csv(io.StringIO(raw))
print(len(records), "requests")

# a 16KB request covers two blocks, so it becomes two accesses
blocks = normalize_to_blocks(records)
print("lbas:", [b.lba for b in blocks])

deltas = compute_deltas([b.lba for b in blocks])
print("deltas:", deltas)

# keep the 2 most frequent deltas; everything else maps to class 0
vocab = build_vocab(deltas, k=2)
print("classes:", {d: vocab.encode(d) for d in sorted(set(deltas))})
print(f"coverage {vocab.coverage():.2%}")

# timestamps are in 100ns ticks; a pause longer than 1000 ticks starts a new segment
streams = split_streams(blocks, vocab, gap_limit=1000, window=3)
for s in streams:
    print(s.stream_id, s.classes.tolist(), "->", s.target_class, "anchor", s.anchor_lba)
