"""Command-line front end.

Subcommands:

* ``build``  -- parse a directory of scores into graph files
* ``sample`` -- draw seeded mini-batches from a graph directory
* ``stats``  -- corpus statistics (edges per type, degrees, onset groups)
* ``bench``  -- time the reference vs optimized builders and the sampler

Exit codes: 0 success, 1 internal error, 2 user/input error.  Every flag
can also be supplied through a JSON file passed with ``--config``; explicit
command-line flags win over config-file values.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import (ConfigError, FileFormatError, ParseError,
                     ScoreGraphError, UnsupportedMeterError, ValidationError)
from .graph import (EdgeType, GraphOptions, NOTE_RELATIONS,
                    build_note_edges, build_note_edges_reference,
                    build_score_graph)
from .sampling import (SamplerConfig, UNBOUNDED, sample_batch,
                       sample_corpus_batches)
from .score import parse_midi, parse_note_json
from .storage import load_graph_dir, read_graph_file, write_batch_container, \
    write_graph_file
from .synth import synthetic_score

_USER_ERROR = 2
_INTERNAL_ERROR = 1

_FORMAT_PATTERNS = {"notes-json": ("*.json",), "midi": ("*.mid", "*.midi")}


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return _USER_ERROR


def _parse_fanout(text: str) -> tuple[int | None, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if part.lower() in ("all", "unbounded"):
            out.append(UNBOUNDED)
            continue
        try:
            value = int(part)
        except ValueError:
            raise ConfigError(f"bad fanout entry {part!r}") from None
        if value < 1:
            raise ConfigError(f"fanout entries must be positive, got {value}")
        out.append(value)
    if not out:
        raise ConfigError("empty fanout list")
    return tuple(out)


def _build_one(args: tuple[str, str, str, bool, bool]) -> tuple[str, str, dict | None]:
    """Worker for cmd_build: returns (name, error message or '', summary)."""
    in_path, out_path, fmt, inverse, metrical = args
    data = Path(in_path).read_bytes()
    name = Path(in_path).name
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            score = parse_midi(data, source_name=name) if fmt == "midi" \
                else parse_note_json(data, source_name=name)
        graph = build_score_graph(
            score, GraphOptions(inverse_edges=inverse, metrical=metrical))
        write_graph_file(graph, out_path)
    except ScoreGraphError as e:
        return name, str(e), None
    return name, "", {"notes": graph.note_count, "edges": graph.num_edges()}


def cmd_build(args) -> int:
    in_dir = Path(args.input)
    if not in_dir.is_dir():
        return _fail(f"input directory {in_dir} does not exist")
    files: list[Path] = []
    for pattern in _FORMAT_PATTERNS[args.format]:
        files.extend(in_dir.glob(pattern))
    files = sorted(set(files))
    if not files:
        return _fail(f"no {args.format} files in {in_dir}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = [(str(p), str(out_dir / (p.stem + ".graph")), args.format,
             args.inverse, args.metrical) for p in files]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_build_one, jobs))
    else:
        results = [_build_one(j) for j in jobs]

    failures = 0
    total_notes = total_edges = 0
    for name, error, summary in results:
        if error:
            failures += 1
            print(f"failed {name}: {error}", file=sys.stderr)
        else:
            total_notes += summary["notes"]
            total_edges += summary["edges"]
            print(f"built {name}: notes={summary['notes']} "
                  f"edges={summary['edges']}")
    print(f"done: {len(results) - failures}/{len(results)} scores, "
          f"notes={total_notes} edges={total_edges}")
    return _USER_ERROR if failures else 0


def cmd_sample(args) -> int:
    graph_dir = Path(args.graphs)
    if not graph_dir.is_dir():
        return _fail(f"graph directory {graph_dir} does not exist")
    names, graphs = load_graph_dir(graph_dir)
    kept = [(n, g) for n, g in zip(names, graphs) if g.note_count > 0]
    for n, g in zip(names, graphs):
        if g.note_count == 0:
            print(f"skipping {n}: no notes", file=sys.stderr)
    if not kept:
        return _fail(f"no non-empty graphs in {graph_dir}")
    names = [n for n, _ in kept]
    corpus = [g for _, g in kept]

    cfg = SamplerConfig(
        target_size=args.target_size,
        scores_per_batch=args.batch_size,
        fanouts=_parse_fanout(args.fanout),
        seed=args.seed,
        include_metrical=args.metrical)
    batches = list(sample_corpus_batches(corpus, cfg, args.num_batches))
    write_batch_container(args.out, batches, cfg, names)
    total = sum(b.total_targets for b in batches)
    print(f"wrote {len(batches)} batch(es) to {args.out}: "
          f"scores={len(corpus)} total_targets={total}")
    return 0


_DEGREE_BUCKETS = (0, 1, 2, 4, 8, 16, 32)


def _degree_histogram(graph) -> dict[str, int]:
    degree = np.zeros(graph.note_count, dtype=np.int64)
    for etype in NOTE_RELATIONS:
        rows = graph.edges.get(etype)
        if rows is None or not len(rows):
            continue
        degree += np.bincount(rows[:, 0], minlength=graph.note_count)
        degree += np.bincount(rows[:, 1], minlength=graph.note_count)
    hist: dict[str, int] = {}
    for i, low in enumerate(_DEGREE_BUCKETS):
        high = _DEGREE_BUCKETS[i + 1] if i + 1 < len(_DEGREE_BUCKETS) else None
        label = f"{low}" if high == low + 1 else \
            (f"{low}-{high - 1}" if high else f"{low}+")
        mask = (degree >= low) & (degree < high if high else degree >= low)
        hist[label] = int(mask.sum())
    return hist


def _onset_group_sizes(graph) -> dict[int, int]:
    if graph.note_count == 0:
        return {}
    _, counts = np.unique(graph.note_onsets, return_counts=True)
    sizes, freq = np.unique(counts, return_counts=True)
    return {int(s): int(f) for s, f in zip(sizes, freq)}


def cmd_stats(args) -> int:
    graph_dir = Path(args.graphs)
    if not graph_dir.is_dir():
        return _fail(f"graph directory {graph_dir} does not exist")
    names, graphs = load_graph_dir(graph_dir)
    if not graphs:
        return _fail(f"no graph files in {graph_dir}")

    edge_totals: dict[str, int] = {}
    total_notes = 0
    group_sizes: dict[int, int] = {}
    print(f"{'file':<32} {'notes':>7} {'beats':>6} {'measures':>8} {'edges':>9}")
    for name, g in zip(names, graphs):
        total_notes += g.note_count
        for etype, rows in g.edges.items():
            edge_totals[etype.value] = edge_totals.get(etype.value, 0) + len(rows)
        for size, freq in _onset_group_sizes(g).items():
            group_sizes[size] = group_sizes.get(size, 0) + freq
        print(f"{name:<32} {g.note_count:>7} {g.beat_count:>6} "
              f"{g.measure_count:>8} {g.num_edges():>9}")
    print(f"\ncorpus: files={len(graphs)} notes={total_notes}")
    print("edges per type:")
    for etype in EdgeType:
        if etype.value in edge_totals:
            print(f"  {etype.value:<20} {edge_totals[etype.value]}")
    agg_hist: dict[str, int] = {}
    for g in graphs:
        for label, count in _degree_histogram(g).items():
            agg_hist[label] = agg_hist.get(label, 0) + count
    print("note degree histogram:")
    for label, count in agg_hist.items():
        print(f"  {label:<8} {count}")
    print("onset group sizes:")
    for size in sorted(group_sizes):
        print(f"  {size:<8} {group_sizes[size]}")
    return 0


def _time_call(fn, repeat: int) -> list[float]:
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        out.append(time.perf_counter() - t0)
    return out


def cmd_bench(args) -> int:
    if args.notes < 1:
        return _fail(f"--notes must be positive, got {args.notes}")
    if args.repeat < 1:
        return _fail(f"--repeat must be positive, got {args.repeat}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(args.seed)))
    score = synthetic_score(args.notes, rng)
    ref_times = _time_call(lambda: build_note_edges_reference(score), args.repeat)
    opt_times = _time_call(lambda: build_note_edges(score), args.repeat)

    graph = build_score_graph(score)
    cfg = SamplerConfig(target_size=args.target_size, scores_per_batch=1,
                        seed=args.seed)
    sample_times = _time_call(lambda: sample_batch([graph], cfg), args.repeat)

    print(f"synthetic score: notes={args.notes} "
          f"edges={sum(len(r) for r in build_note_edges(score).values())}")
    print(f"{'run':<4} {'reference_s':>12} {'optimized_s':>12} {'sampler_s':>12}")
    for i, (r, o, s) in enumerate(zip(ref_times, opt_times, sample_times), 1):
        print(f"{i:<4} {r:>12.4f} {o:>12.4f} {s:>12.4f}")
    print(f"{'med':<4} {float(np.median(ref_times)):>12.4f} "
          f"{float(np.median(opt_times)):>12.4f} "
          f"{float(np.median(sample_times)):>12.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scoregraph",
        description="Score graph construction and mini-batch sampling")
    parser.add_argument("--config", metavar="FILE",
                        help="JSON file providing default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="convert scores into graph files")
    p.add_argument("--input", required=True, help="directory of score files")
    p.add_argument("--format", choices=sorted(_FORMAT_PATTERNS), required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--metrical", action="store_true",
                   help="add beat/measure nodes")
    p.add_argument("--inverse", action="store_true",
                   help="add reversed relations")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel worker processes")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("sample", help="draw seeded mini-batches")
    p.add_argument("--graphs", required=True, help="directory of graph files")
    p.add_argument("--batch-size", type=int, default=300,
                   help="scores per batch")
    p.add_argument("--target-size", type=int, default=300,
                   help="max target notes per score")
    p.add_argument("--fanout", default="3,3,3",
                   help="per-layer in-edge bounds, e.g. 3,3,3 or all,all,all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-batches", type=int, default=1)
    p.add_argument("--metrical", action="store_true",
                   help="extend samples with beat/measure nodes")
    p.add_argument("--out", required=True, help="output container file")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("stats", help="print corpus statistics")
    p.add_argument("--graphs", required=True, help="directory of graph files")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bench", help="time builders and sampler")
    p.add_argument("--notes", type=int, required=True)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--target-size", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return argv
    try:
        doc = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {known.config}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    for action in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        defaults = {k.replace("-", "_"): v for k, v in doc.items()}
        valid = {a.dest for a in action._actions}  # noqa: SLF001
        action.set_defaults(**{k: v for k, v in defaults.items() if k in valid})
    return argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (ParseError, ValidationError, ConfigError, UnsupportedMeterError,
            FileFormatError, OSError) as e:
        return _fail(str(e))
    except Exception as e:  # anything else is an internal error
        traceback.print_exc()
        print(f"internal error: {e}", file=sys.stderr)
        return _INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
