"""Command-line front end: ``sgdp preprocess|train|eval|report``.

Settings resolve as: TrainConfig defaults < ``--config`` file (flat
``key = value`` lines, ``#`` comments) < ``SGDP_<KEY>`` environment variables
< explicit command-line flags.

Exit codes: 0 success, 1 internal error, 2 usage or input error,
3 checkpoint/vocabulary mismatch.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .cache_sim import ACCOUNTING, REPORT_COLUMNS, reports_to_csv, reports_to_json, simulate
from .delta_codec import DeltaVocab, read_streams, stack_streams, write_streams
from .model import TrainConfig, VocabMismatchError, load_checkpoint, save_checkpoint, train
from .pipeline import N_FOLDS, build_dataset, make_prefetcher, only_fold, without_fold
from .prefetchers import PREFETCHER_NAMES, SgdpModel
from .trace_ingest import TraceParseError, filter_ops, read_trace, write_access_cache
from .variants import PageVocab, make_sgdp_l_config, make_sgdp_p_config

log = logging.getLogger("sgdp")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_MISMATCH = 0, 1, 2, 3
ENV_PREFIX = "SGDP_"
EXTRA_KEYS = {"ops": str, "block_size": int, "lenient": bool}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config

def _coerce(kind, text):
    if kind is bool:
        return str(text).strip().lower() in ("1", "true", "yes", "on")
    return kind(text)


def _config_types() -> dict:
    types = {f.name: type(f.default) for f in fields(TrainConfig)}
    types.update(EXTRA_KEYS)
    return types


def read_config_file(path) -> dict:
    out = {}
    types = _config_types()
    with open(path, "r", encoding="utf-8") as fh:
        for no, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{no}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise UsageError(f"{path}:{no}: unknown key {key!r}")
            out[key] = _coerce(types[key], val)
    return out


def resolve_settings(args) -> tuple[TrainConfig, dict]:
    types = _config_types()
    vals: dict = {"ops": "all", "block_size": 8192, "lenient": False}
    if getattr(args, "config", None):
        vals.update(read_config_file(args.config))
    for key, kind in types.items():
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            vals[key] = _coerce(kind, env)
    for key in types:
        cli_val = getattr(args, key, None)
        if cli_val is not None:
            vals[key] = cli_val
    extra = {k: vals.pop(k) for k in list(vals) if k in EXTRA_KEYS}
    base = {k: v for k, v in vals.items() if k != "variant"}
    try:
        cfg = TrainConfig(**base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    variant = vals.get("variant", "base")
    if variant == "large":
        cfg = make_sgdp_l_config(cfg)
    elif variant == "page":
        cfg = make_sgdp_p_config(cfg)
    elif variant != "base":
        raise UsageError(f"unknown variant {variant!r}")
    return cfg, extra


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def make_manifest(config: TrainConfig, dataset_path, vocab_hash, fold, dataset_sha256=None, **extra) -> dict:
    if dataset_sha256 is None and dataset_path:
        dataset_sha256 = file_sha256(dataset_path)
    man = {
        "config": asdict(config),
        "dataset_path": str(dataset_path) if dataset_path else None,
        "dataset_sha256": dataset_sha256,
        "vocab_hash": vocab_hash,
        "seed": config.seed,
        "fold": fold,
        "versions": {"sgdp": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    if config.variant == "page":
        # the fixed in-page vocabulary keeps class 0 as "no prefetch"
        man["page_vocab"] = {"page_blocks": PageVocab().page_size_blocks, "classes": PageVocab().num_classes,
                             "class0_no_prefetch": True}
    man.update(extra)
    return man


def _check_fold(fold):
    if fold is not None and not 0 <= fold < N_FOLDS:
        raise UsageError(f"--fold must be in 0..{N_FOLDS - 1}, got {fold}")


def _load_trace(path, extra):
    if not Path(path).is_file():
        raise UsageError(f"trace not found: {path}")
    errors: list = []
    try:
        accesses, unit_ns = read_trace(path, lenient=extra["lenient"], block_size=extra["block_size"], errors=errors)
    except TraceParseError as exc:
        raise UsageError(f"{path}: {exc}") from None
    if errors:
        log.warning("skipped %d malformed lines", len(errors))
    return filter_ops(accesses, extra["ops"]), unit_ns


# ---------------------------------------------------------------- commands

def cmd_preprocess(args) -> int:
    cfg, extra = resolve_settings(args)
    _check_fold(args.fold)
    accesses, unit_ns = _load_trace(args.trace, extra)
    train_acc = without_fold(accesses, args.fold)
    if not train_acc:
        raise UsageError("trace is empty")
    try:
        ds = build_dataset(train_acc, cfg, unit_ns)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_access_cache(out / "accesses.bin", accesses)
    if isinstance(ds.vocab, DeltaVocab):
        ds.vocab.save(out / "vocab.csv")
    write_streams(out / "streams.bin", ds.streams, cfg.window)
    stats = dict(ds.stats, total_accesses=len(accesses), unit_ns=unit_ns,
                 coverage_pct=100.0 * ds.stats["coverage"])
    manifest = make_manifest(cfg, args.trace, ds.vocab.hash(), args.fold)
    with open(out / "stats.json", "w", encoding="utf-8") as fh:
        json.dump({"stats": stats, "manifest": manifest}, fh, indent=2, sort_keys=True)
    print(f"accesses      {len(accesses)}")
    print(f"distinct lbas {len({a.lba for a in accesses})}")
    print(f"streams       {len(ds.streams)}")
    print(f"vocabulary    {ds.vocab.k} classes (+ no-prefetch)")
    print(f"top-K coverage {stats['coverage_pct']:.2f}%")
    return EXIT_OK


def _load_preprocessed(data_dir):
    data = Path(data_dir)
    if not (data / "stats.json").is_file():
        raise UsageError(f"{data}: not a preprocess output directory")
    with open(data / "stats.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    vocab = DeltaVocab.load(data / "vocab.csv") if (data / "vocab.csv").is_file() else PageVocab()
    return meta, vocab, read_streams(data / "streams.bin")


def cmd_train(args) -> int:
    _check_fold(args.fold)
    meta, vocab, streams = _load_preprocessed(args.data)
    # stream-shaping settings come from preprocess; training flags may override the rest
    cfg, _ = resolve_settings(args)
    pre = meta["manifest"]["config"]
    for key in ("k", "window", "stride", "gap_ns", "variant"):
        setattr(cfg, key, pre[key])
    streams = without_fold(streams, args.fold)
    if not streams:
        raise UsageError("no training streams")
    classes, targets, _ = stack_streams(streams)
    params, history = train(classes, targets, cfg, vocab.num_classes)
    manifest = make_manifest(cfg, meta["manifest"]["dataset_path"], vocab.hash(), args.fold,
                             dataset_sha256=meta["manifest"]["dataset_sha256"])
    save_checkpoint(args.out, params, cfg, vocab.hash(), extra={"manifest": manifest})
    hist_path = args.history or f"{args.out}.history.csv"
    with open(hist_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "lr", "loss", "accuracy"], lineterminator="\n")
        w.writeheader()
        w.writerows(history)
    print(f"trained {len(history)} epochs on {len(streams)} streams; "
          f"final loss {history[-1]['loss']:.5f} acc {history[-1]['accuracy']:.4f}")
    return EXIT_OK


def _run_one(job):
    name, size, steps, accesses, model, vocab, unit_ns = job
    pf = make_prefetcher(name, model, vocab, steps, unit_ns)
    return simulate(accesses, pf, size).row()


def cmd_eval(args) -> int:
    _, extra = resolve_settings(args)
    _check_fold(args.fold)
    names = [n.strip() for n in args.prefetchers.split(",") if n.strip()]
    for n in names:
        if n not in PREFETCHER_NAMES:
            raise UsageError(f"unknown prefetcher {n!r}; choose from {','.join(PREFETCHER_NAMES)}")
    try:
        sizes = [int(s) for s in args.sizes.split(",")]
    except ValueError:
        raise UsageError(f"bad --sizes {args.sizes!r}") from None
    if not sizes or min(sizes) < 1 or args.steps < 1:
        raise UsageError("cache sizes and steps must be >= 1")
    learned = [n for n in names if n.startswith("sgdp")]
    model = vocab = None
    cfg = None
    if learned:
        if not args.checkpoint:
            raise UsageError(f"{','.join(learned)} needs --checkpoint")
        if args.vocab:
            try:
                vocab = DeltaVocab.load(args.vocab)
            except ValueError as exc:
                raise UsageError(f"{args.vocab}: unreadable vocabulary ({exc})") from None
        else:
            vocab = PageVocab()
        params, cfg, sidecar = load_checkpoint(args.checkpoint, vocab_hash=vocab.hash())
        model = SgdpModel(params, cfg, sidecar["vocab_hash"])
    accesses, unit_ns = _load_trace(args.trace, extra)
    accesses = only_fold(accesses, args.fold)
    jobs = []
    for n in names:
        steps = args.steps if n.startswith("sgdp") else 1
        for size in sizes:
            jobs.append((n, size, steps, accesses, model if n in learned else None, vocab, unit_ns))
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as ex:
                rows = list(ex.map(_run_one, jobs))
        else:
            rows = [_run_one(j) for j in jobs]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    manifest = make_manifest(cfg or TrainConfig(), args.trace, vocab.hash() if vocab else None, args.fold,
                             accounting=ACCOUNTING, checkpoint=args.checkpoint)
    text = reports_to_json(rows, manifest) if args.format == "json" else reports_to_csv(rows, manifest)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def read_results(path) -> tuple[dict | None, list[dict]]:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        manifest, rows = doc.get("manifest"), doc.get("rows", [])
    else:
        manifest = None
        lines = []
        for line in text.splitlines():
            if line.startswith("# manifest="):
                manifest = json.loads(line[len("# manifest="):])
            elif not line.startswith("#"):
                lines.append(line)
        rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    for i, row in enumerate(rows):
        for col in REPORT_COLUMNS:
            if col not in row:
                raise UsageError(f"{path}: row {i}: missing column {col!r}")
    ints = ("cache_size", "steps", "hits", "misses", "prefetch_issued", "prefetch_correct")
    clean = []
    for row in rows:
        r = {c: row[c] for c in REPORT_COLUMNS}
        for c in ints:
            r[c] = int(r[c])
        r["hr"], r["epr"] = float(r["hr"]), float(r["epr"])
        clean.append(r)
    return manifest, clean


def merge_results(paths, force: bool = False) -> list[dict]:
    merged: dict = {}
    hashes = set()
    for p in paths:
        manifest, rows = read_results(p)
        if manifest is not None and manifest.get("dataset_sha256"):
            hashes.add(manifest["dataset_sha256"])
        for r in rows:
            merged[(r["prefetcher"], r["cache_size"], r["steps"])] = r
    if len(hashes) > 1 and not force:
        raise UsageError("result files come from different datasets; pass --force to merge anyway")
    return [merged[k] for k in sorted(merged, key=lambda k: (k[0], k[1], k[2]))]


def format_table(rows) -> str:
    head = f"{'prefetcher':<10} {'N':>6} {'steps':>5} {'HR@N %':>8} {'EPR@N %':>8} {'hits':>8} {'issued':>8}"
    out = [head, "-" * len(head)]
    for r in rows:
        out.append(f"{r['prefetcher']:<10} {r['cache_size']:>6} {r['steps']:>5} {100 * r['hr']:>8.2f} "
                   f"{100 * r['epr']:>8.2f} {r['hits']:>8} {r['prefetch_issued']:>8}")
    return "\n".join(out) + "\n"


def cmd_report(args) -> int:
    for p in args.results:
        if not Path(p).is_file():
            raise UsageError(f"result file not found: {p}")
    rows = merge_results(args.results, args.force)
    if args.format == "json":
        text = json.dumps(rows, indent=2)
    elif args.format == "csv":
        text = reports_to_csv(rows)
    else:
        text = format_table(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_config_flags(p, training: bool):
    p.add_argument("--config", help="flat key = value settings file")
    p.add_argument("--seed", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--gap-ns", dest="gap_ns", type=float)
    p.add_argument("--variant", choices=["base", "large", "page"])
    p.add_argument("--w-s", dest="w_s", type=float)
    if training:
        p.add_argument("--d", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch", type=int)
        p.add_argument("--lr0", type=float)
        p.add_argument("--lr-decay", dest="lr_decay", type=float)
        p.add_argument("--l2-lambda", dest="l2_lambda", type=float)
        p.add_argument("--prop-steps", dest="prop_steps", type=int)
        p.add_argument("--tol", type=float)
        p.add_argument("--dtype", choices=["float32", "float64"])


def _add_trace_flags(p):
    p.add_argument("--ops", choices=["read", "write", "all"])
    p.add_argument("--lenient", action="store_true", default=None, help="skip malformed trace lines")
    p.add_argument("--block-size", dest="block_size", type=int)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sgdp", description="Stream-graph delta prefetcher toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="trace -> accesses, vocabulary, streams")
    p.add_argument("trace")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--fold", type=int, help="hold out this tenth of the trace from the vocabulary and streams")
    _add_config_flags(p, training=False)
    _add_trace_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="fit the model on preprocessed streams")
    p.add_argument("--data", required=True, help="preprocess output directory")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="history CSV path (default <out>.history.csv)")
    p.add_argument("--fold", type=int, help="leave out this contiguous tenth of the streams")
    _add_config_flags(p, training=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="simulate prefetchers over cache sizes")
    p.add_argument("--trace", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--vocab", help="vocab.csv matching the checkpoint (not needed for the page variant)")
    p.add_argument("--prefetchers", default="none,naive,stride,sgdp")
    p.add_argument("--sizes", default="10,100,1000")
    p.add_argument("--steps", type=int, default=1, help="rolling prediction steps for learned prefetchers")
    p.add_argument("--fold", type=int, help="simulate only this tenth of the trace")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--config")
    _add_trace_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="merge result files into one comparison table")
    p.add_argument("results", nargs="+")
    p.add_argument("--format", choices=["table", "csv", "json"], default="table")
    p.add_argument("--force", action="store_true", help="merge results from different datasets")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sgdp {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VocabMismatchError as exc:
        print(f"sgdp {args.command}: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    except FileNotFoundError as exc:
        print(f"sgdp {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"sgdp {args.command}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
