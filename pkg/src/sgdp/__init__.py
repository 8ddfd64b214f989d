"""Stream-graph LBA-delta prefetching: trace ingest, delta streams, gated GNN, cache simulation."""

__version__ = "0.1.0"

from .cache_sim import LruCache, SimReport, simulate, sweep
from .delta_codec import DeltaStream, DeltaVocab, build_vocab, compute_deltas, split_streams
from .model import ModelParams, TrainConfig, init_params, predict, train
from .pipeline import build_dataset, fit, make_prefetcher
from .stream_graph import StreamGraph, build_graph
from .trace_ingest import BlockAccess, TraceRecord, normalize_to_blocks, parse_msrc_csv, read_trace
