"""Flat numeric array views over scoregraph outputs.

This package is the hand-off boundary between the graph/sampling core and
ML frameworks: it exposes graphs and sampled batches as plain read-only
numpy arrays whose values are bit-identical to the binary files written by
``scoregraph build`` / ``scoregraph sample``.  Nothing is recomputed here;
every view wraps the core's own output.

Array layout mirrors the file format field for field, with one
documented reshaping: edge lists are exposed as (2, E) index arrays
(row 0 = sources, row 1 = destinations) instead of the on-disk (E, 2)
pair rows.
"""

from __future__ import annotations

import queue
import threading
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from scoregraph import (Batch, GraphOptions, SamplerConfig, ScoreGraph,
                        build_score_graph, parse_midi, parse_note_json,
                        sample_batch, unfold_targets)
from scoregraph.storage import load_graph_dir, read_graph_file

__version__ = "0.1.0"

__all__ = ["ArrayBatchView", "ArrayGraphView", "bridge_build_graph",
           "bridge_sample_batches"]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _edge_index(edges) -> dict[str, np.ndarray]:
    return {etype.value: _frozen(rows.T) for etype, rows in edges.items()}


@dataclass(frozen=True)
class ArrayGraphView:
    """One score graph as flat arrays."""

    edge_index: dict[str, np.ndarray]  # (2, E) int64 per edge type
    note_features: np.ndarray          # (N, K) float32
    beat_features: np.ndarray
    measure_features: np.ndarray
    note_onsets: np.ndarray
    note_pitches: np.ndarray
    beat_spans: np.ndarray
    measure_spans: np.ndarray
    note_count: int
    beat_count: int
    measure_count: int
    feature_width: int
    divisions_per_quarter: int
    inverse_edges: bool
    metrical: bool


@dataclass(frozen=True)
class ArrayBatchView:
    """One sampled batch as flat arrays, plus the unfolded sequence view."""

    edge_index: dict[str, np.ndarray]  # (2, E) int64 per edge type
    note_features: np.ndarray
    beat_features: np.ndarray
    measure_features: np.ndarray
    note_onsets: np.ndarray
    note_pitches: np.ndarray
    target_ids: np.ndarray
    score_indices: np.ndarray          # (B,)
    target_offsets: np.ndarray         # (B,)
    target_counts: np.ndarray          # (B,)
    sequence: np.ndarray               # (B, S, K) float32
    mask: np.ndarray                   # (B, S) bool
    batch_index: int
    config: SamplerConfig
    source_batch: Batch = field(repr=False, compare=False, default=None)

    @property
    def total_targets(self) -> int:
        return len(self.target_ids)


def _graph_view(graph: ScoreGraph) -> ArrayGraphView:
    return ArrayGraphView(
        edge_index=_edge_index(graph.edges),
        note_features=_frozen(graph.note_features),
        beat_features=_frozen(graph.beat_features),
        measure_features=_frozen(graph.measure_features),
        note_onsets=_frozen(graph.note_onsets),
        note_pitches=_frozen(graph.note_pitches),
        beat_spans=_frozen(graph.beat_spans),
        measure_spans=_frozen(graph.measure_spans),
        note_count=graph.note_count,
        beat_count=graph.beat_count,
        measure_count=graph.measure_count,
        feature_width=graph.feature_width,
        divisions_per_quarter=graph.divisions_per_quarter,
        inverse_edges=graph.options.inverse_edges,
        metrical=graph.options.metrical)


def _batch_view(batch: Batch) -> ArrayBatchView:
    sequence, mask = unfold_targets(batch, batch.config.target_size,
                                    batch.feature_width)
    return ArrayBatchView(
        edge_index=_edge_index(batch.edges),
        note_features=_frozen(batch.note_features),
        beat_features=_frozen(batch.beat_features),
        measure_features=_frozen(batch.measure_features),
        note_onsets=_frozen(batch.note_onsets),
        note_pitches=_frozen(batch.note_pitches),
        target_ids=_frozen(batch.target_ids),
        score_indices=_frozen(batch.score_records[:, 0]),
        target_offsets=_frozen(batch.score_records[:, 1]),
        target_counts=_frozen(batch.score_records[:, 2]),
        sequence=_frozen(sequence),
        mask=_frozen(mask),
        batch_index=batch.batch_index,
        config=batch.config,
        source_batch=batch)


def bridge_build_graph(data: bytes | str, format: str = "notes-json",
                       inverse_edges: bool = False, metrical: bool = False,
                       source_name: str | None = None) -> ArrayGraphView:
    """Parse one score document and build its graph, returned as arrays.

    ``format`` selects the parser ("notes-json" or "midi").  Parse and
    validation errors from the core propagate unchanged.  The arrays equal
    what ``scoregraph build`` writes for the same input and options.
    """
    if format == "midi":
        if isinstance(data, str):
            data = data.encode("latin-1")
        score = parse_midi(data, source_name=source_name or "<midi>")
    elif format == "notes-json":
        score = parse_note_json(data, source_name=source_name or "<notes-json>")
    else:
        raise ValueError(f"unknown format {format!r}")
    graph = build_score_graph(
        score, GraphOptions(inverse_edges=inverse_edges, metrical=metrical))
    return _graph_view(graph)


def _load_corpus(corpus) -> tuple[list[str], list[ScoreGraph]]:
    if isinstance(corpus, (str, Path)) and Path(corpus).is_dir():
        names, graphs = load_graph_dir(corpus)
    else:
        paths = [Path(p) for p in corpus]
        names = [p.name for p in paths]
        graphs = [read_graph_file(p) for p in paths]
    kept = [(n, g) for n, g in zip(names, graphs) if g.note_count > 0]
    return [n for n, _ in kept], [g for _, g in kept]


def _prefetching(generator: Iterator, depth: int = 1) -> Iterator:
    """Run the generator in a worker thread, keeping ``depth`` items ready."""
    done = object()
    q: queue.Queue = queue.Queue(maxsize=depth)

    def pump():
        try:
            for item in generator:
                q.put(item)
        except BaseException as exc:  # re-raised on the consumer side
            q.put(exc)
        else:
            q.put(done)

    thread = threading.Thread(target=pump, daemon=True)
    thread.start()
    while True:
        item = q.get()
        if item is done:
            break
        if isinstance(item, BaseException):
            raise item
        yield item
    thread.join()


def bridge_sample_batches(corpus, config: SamplerConfig | Mapping | None = None,
                          seed: int | None = None, num_batches: int = 1,
                          prefetch: bool = True) -> Iterator[ArrayBatchView]:
    """Stream seeded batches over a graph corpus as array views.

    ``corpus`` is a graph directory or a sequence of graph file paths; empty
    graphs are skipped exactly like the command-line sampler, so for the
    same directory, config and seed the produced values are bit-identical
    to the container file written by ``scoregraph sample``.  Configuration
    problems raise before the first batch is produced.  With ``prefetch``
    the next batch is sampled in a background thread while the caller
    consumes the current one; each view is an immutable snapshot.
    """
    if config is None:
        cfg = SamplerConfig()
    elif isinstance(config, SamplerConfig):
        cfg = config
    elif isinstance(config, Mapping):
        cfg = SamplerConfig(**config)
    else:
        raise TypeError(f"config must be SamplerConfig or mapping, "
                        f"got {type(config).__name__}")
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    if num_batches < 0:
        raise ValueError(f"num_batches must be >= 0, got {num_batches}")
    if not isinstance(corpus, (str, Path)) and not isinstance(corpus, Sequence):
        corpus = list(corpus)
    _, graphs = _load_corpus(corpus)
    if not graphs:
        from scoregraph import ConfigError
        raise ConfigError("corpus contains no non-empty graphs")
    # validate the whole configuration eagerly, before iteration starts
    from scoregraph.sampling import _check_corpus
    _check_corpus(graphs, cfg)

    def generate():
        for i in range(num_batches):
            yield _batch_view(sample_batch(graphs, cfg, batch_index=i))

    return _prefetching(generate()) if prefetch else generate()
