"""Musically informed mini-batch sampling.

Per score, a batch draws a *target window*: a random anchor note is snapped
left to the start of its onset group (its vertical neighbors), the window
extends up to S notes to the right, and the right boundary is corrected so
no onset group is split.  Layered neighbor sampling then fetches a bounded
number of in-edges per node, relation and hop so the window's embeddings
can be computed by a k-layer message-passing encoder.  Up to B such
per-score subgraphs are joined into one batch with contiguous relabeled
ids, which bounds the number of updated nodes by S x B.

Randomness is explicit and splittable: every draw comes from a generator
derived from (seed, stream, batch index, slot), so identical configurations
reproduce identical batches on any little-endian platform, and independent
workers can sample disjoint batches concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import AssemblyError, ConfigError
from .graph import (EdgeType, NOTE_RELATIONS, ScoreGraph, _edge_array,
                    _empty_edges, _multirange)

UNBOUNDED = None  # fan-out value meaning "take every in-edge"

DEFAULT_TARGET_SIZE = 300
DEFAULT_SCORES_PER_BATCH = 300
DEFAULT_FANOUTS = (3, 3, 3)

_STREAM_SELECT = 0
_STREAM_SLOT = 1
_STREAM_EPOCH = 2


def _child_rng(seed: int, *key: int) -> np.random.Generator:
    # flatten each key element into two 32-bit words for the spawn key
    words: list[int] = []
    for k in key:
        words.append(k & 0xFFFFFFFF)
        words.append((k >> 32) & 0xFFFFFFFF)
    ss = np.random.SeedSequence(seed, spawn_key=tuple(words))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SamplerConfig:
    """Sampling budget and determinism knobs.

    ``fanouts`` has one entry per message-passing layer; each entry is a
    positive bound on sampled in-edges per (node, relation) or
    :data:`UNBOUNDED`.
    """

    target_size: int = DEFAULT_TARGET_SIZE
    scores_per_batch: int = DEFAULT_SCORES_PER_BATCH
    fanouts: tuple[int | None, ...] = DEFAULT_FANOUTS
    seed: int = 0
    include_metrical: bool = False

    def __post_init__(self):
        if self.target_size < 1:
            raise ConfigError(f"target_size must be >= 1, got {self.target_size}")
        if self.scores_per_batch < 1:
            raise ConfigError(
                f"scores_per_batch must be >= 1, got {self.scores_per_batch}")
        if len(self.fanouts) < 1:
            raise ConfigError("at least one sampling layer is required")
        for f in self.fanouts:
            if f is not UNBOUNDED and (not isinstance(f, int) or f < 1):
                raise ConfigError(f"fanout entries must be positive or unbounded, "
                                  f"got {f!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")

    @property
    def num_layers(self) -> int:
        return len(self.fanouts)


@dataclass(frozen=True)
class TargetWindow:
    """Contiguous note-id range [lo, hi) of target nodes for one score."""

    score_index: int
    lo: int
    hi: int
    truncated_tail: bool = False

    @property
    def count(self) -> int:
        return self.hi - self.lo

    def node_ids(self) -> np.ndarray:
        return np.arange(self.lo, self.hi, dtype=np.int64)


@dataclass(eq=False)
class LayeredSubgraph:
    """Target window plus per-layer sampled in-edges for one score.

    ``layer_edges[0]`` holds the edges into the targets; deeper entries hold
    edges into everything reached so far.  ``node_set`` is the sorted union
    of every touched note id.
    """

    targets: TargetWindow
    layer_edges: tuple[dict[EdgeType, np.ndarray], ...]
    node_set: np.ndarray
    beat_ids: np.ndarray | None = None
    measure_ids: np.ndarray | None = None
    metrical_edges: dict[EdgeType, np.ndarray] | None = None


@dataclass(eq=False)
class Batch:
    """Joined per-score subgraphs with contiguous per-type node ids."""

    edges: dict[EdgeType, np.ndarray]
    note_features: np.ndarray
    beat_features: np.ndarray
    measure_features: np.ndarray
    note_onsets: np.ndarray
    note_pitches: np.ndarray
    target_ids: np.ndarray
    score_records: np.ndarray  # (B, 3) rows of (score_index, target_offset, count)
    config: SamplerConfig
    batch_index: int = 0

    @property
    def note_count(self) -> int:
        return len(self.note_features)

    @property
    def beat_count(self) -> int:
        return len(self.beat_features)

    @property
    def measure_count(self) -> int:
        return len(self.measure_features)

    @property
    def feature_width(self) -> int:
        return self.note_features.shape[1]

    @property
    def total_targets(self) -> int:
        return len(self.target_ids)


def _window_bounds(onsets: np.ndarray, target_size: int,
                   anchor: int) -> tuple[int, int, bool]:
    """Pure window arithmetic given a fixed anchor index."""
    n = len(onsets)
    if target_size >= n:
        return 0, n, False
    lo = int(np.searchsorted(onsets, onsets[anchor], side="left"))
    hi = lo + target_size
    if hi >= n:
        return lo, n, False
    if onsets[hi - 1] == onsets[hi]:
        group_start = int(np.searchsorted(onsets, onsets[hi - 1], side="left"))
        if group_start > lo:
            hi = group_start
        else:
            # a single onset group larger than the budget: keep it, truncated
            return lo, lo + target_size, True
    return lo, hi, False


def sample_target_window(graph: ScoreGraph, target_size: int,
                         rng: np.random.Generator,
                         score_index: int = 0) -> TargetWindow:
    """Draw one onset-complete target window of at most ``target_size`` notes.

    The anchor note is uniform over the score.  The window never splits an
    onset group: the left boundary snaps to the anchor's group start and a
    trailing group crossing the budget is dropped entirely, unless the
    anchor group alone exceeds the budget (then it is truncated and flagged).
    A budget of at least the score size selects the whole score.
    """
    if graph.note_count < 1:
        raise ConfigError("cannot sample a window from an empty graph")
    anchor = int(rng.integers(0, graph.note_count))
    lo, hi, truncated = _window_bounds(graph.note_onsets, target_size, anchor)
    return TargetWindow(score_index=score_index, lo=lo, hi=hi,
                        truncated_tail=truncated)


def _sample_in_edges(graph: ScoreGraph, etype: EdgeType, dst_nodes: np.ndarray,
                     fanout: int | None, rng: np.random.Generator) -> np.ndarray:
    """Per destination node, draw up to ``fanout`` distinct in-edges uniformly.

    Selection assigns one uniform key per candidate edge and keeps the
    ``fanout`` smallest keys per node, which is a uniform without-replacement
    draw done in one vectorized pass.
    """
    indptr, rows = graph.in_adjacency(etype)
    starts = indptr[dst_nodes]
    degs = indptr[dst_nodes + 1] - starts
    if fanout is UNBOUNDED:
        picked = _multirange(starts, degs)
    else:
        small = degs <= fanout
        picked_small = _multirange(starts[small], degs[small])
        big_starts = starts[~small]
        big_degs = degs[~small]
        if len(big_starts):
            cand = _multirange(big_starts, big_degs)
            seg = np.repeat(np.arange(len(big_degs)), big_degs)
            keys = rng.random(len(cand))
            order = np.lexsort((keys, seg))
            seg_start = np.concatenate(([0], np.cumsum(big_degs)[:-1]))
            rank = np.arange(len(cand)) - np.repeat(seg_start, big_degs)
            picked_big = cand[order[rank < fanout]]
        else:
            picked_big = np.empty(0, dtype=np.int64)
        picked = np.concatenate([picked_small, picked_big])
    if len(picked) == 0:
        return _empty_edges()
    chosen = rows[picked]
    order = np.lexsort((chosen[:, 0], chosen[:, 1]))
    return chosen[order]


def sample_khop(graph: ScoreGraph, targets: TargetWindow,
                fanouts: tuple[int | None, ...],
                rng: np.random.Generator) -> LayeredSubgraph:
    """Layered neighbor sampling over the note-to-note relations.

    Layer 1 draws in-edges for the targets; every deeper layer draws
    in-edges for all nodes collected so far (targets plus earlier sources),
    so a k-layer encoder evaluated outermost-layer-first sees, for every
    node it still needs at that depth, a fresh bounded sample of its
    in-neighborhood.  With unbounded fanouts this makes the layered
    computation exactly equivalent to a full-graph pass.  Expansion stays
    on note relations; metrical nodes are handled by
    :func:`extend_metrical`.
    """
    seeds = targets.node_ids()
    node_set = seeds
    relations = [t for t in NOTE_RELATIONS if t in graph.edges]
    layers = []
    dst_nodes = seeds
    for fanout in fanouts:
        layer: dict[EdgeType, np.ndarray] = {}
        sources = []
        for etype in relations:
            rows = _sample_in_edges(graph, etype, dst_nodes, fanout, rng)
            layer[etype] = rows
            if len(rows):
                sources.append(rows[:, 0])
        layers.append(layer)
        if sources:
            node_set = np.union1d(node_set, np.concatenate(sources))
        dst_nodes = node_set
    return LayeredSubgraph(targets=targets, layer_edges=tuple(layers),
                           node_set=node_set)


def extend_metrical(graph: ScoreGraph, sub: LayeredSubgraph) -> LayeredSubgraph:
    """Attach the beats/measures of the target notes to a sampled subgraph.

    Adds every beat and measure reachable over a connect edge from a target
    note, those connect edges (plus reverses when the graph has them), and
    the next edges joining included grid-adjacent spans.
    """
    if not graph.options.metrical:
        raise ConfigError("extend_metrical requires a graph built with "
                          "metrical=True")
    targets = sub.targets.node_ids()
    metrical: dict[EdgeType, np.ndarray] = {}

    def _level(connect: EdgeType, connect_rev: EdgeType, nxt: EdgeType):
        rows = graph.edges[connect]
        idx = np.searchsorted(rows[:, 0], targets)
        picked = rows[idx] if len(targets) else _empty_edges()
        ids = np.unique(picked[:, 1]) if len(picked) else \
            np.empty(0, dtype=np.int64)
        metrical[connect] = picked
        if connect_rev in graph.edges:
            metrical[connect_rev] = _edge_array(picked[:, 1], picked[:, 0]) \
                if len(picked) else _empty_edges()
        if len(ids) >= 2:
            adjacent = ids[:-1][np.diff(ids) == 1]
            metrical[nxt] = np.column_stack([adjacent, adjacent + 1])
        else:
            metrical[nxt] = _empty_edges()
        return ids

    beat_ids = _level(EdgeType.CONNECT_BEAT, EdgeType.CONNECT_BEAT_REV,
                      EdgeType.NEXT_BEAT)
    measure_ids = _level(EdgeType.CONNECT_MEASURE, EdgeType.CONNECT_MEASURE_REV,
                         EdgeType.NEXT_MEASURE)
    return replace(sub, beat_ids=beat_ids, measure_ids=measure_ids,
                   metrical_edges=metrical)


def assemble_batch(samples: list[LayeredSubgraph],
                   graphs: list[ScoreGraph],
                   config: SamplerConfig | None = None,
                   batch_index: int = 0) -> Batch:
    """Join per-score subgraphs into one batch with relabeled contiguous ids.

    ``graphs`` is the corpus each sample's ``score_index`` points into.
    Within each node type, relabeling preserves id order per score and
    stacks scores in sample order, so every score's targets occupy one
    contiguous block.
    """
    seen = set()
    for s in samples:
        if s.targets.score_index in seen:
            raise AssemblyError(
                f"duplicate score index {s.targets.score_index} in batch")
        seen.add(s.targets.score_index)

    edge_chunks: dict[EdgeType, list[np.ndarray]] = {}
    note_feats, beat_feats, measure_feats = [], [], []
    onsets, pitches, target_ids, records = [], [], [], []
    note_off = beat_off = measure_off = target_off = 0

    for s in samples:
        g = graphs[s.targets.score_index]
        nodes = s.node_set
        beat_ids = s.beat_ids if s.beat_ids is not None else \
            np.empty(0, dtype=np.int64)
        measure_ids = s.measure_ids if s.measure_ids is not None else \
            np.empty(0, dtype=np.int64)

        def remap_note(ids):
            return note_off + np.searchsorted(nodes, ids)

        merged: dict[EdgeType, list[np.ndarray]] = {}
        for layer in s.layer_edges:
            for etype, rows in layer.items():
                merged.setdefault(etype, []).append(rows)
        for etype, chunks in merged.items():
            rows = np.concatenate(chunks)
            if len(rows):
                rows = np.unique(rows, axis=0)
                rows = np.column_stack([remap_note(rows[:, 0]),
                                        remap_note(rows[:, 1])])
            else:
                rows = _empty_edges()
            edge_chunks.setdefault(etype, []).append(rows)
        if s.metrical_edges is not None:
            for etype, rows in s.metrical_edges.items():
                if etype in (EdgeType.CONNECT_BEAT, EdgeType.CONNECT_MEASURE):
                    side_ids, off = (beat_ids, beat_off) \
                        if etype is EdgeType.CONNECT_BEAT else (measure_ids, measure_off)
                    out = np.column_stack([
                        remap_note(rows[:, 0]),
                        off + np.searchsorted(side_ids, rows[:, 1])]) \
                        if len(rows) else _empty_edges()
                elif etype in (EdgeType.CONNECT_BEAT_REV, EdgeType.CONNECT_MEASURE_REV):
                    side_ids, off = (beat_ids, beat_off) \
                        if etype is EdgeType.CONNECT_BEAT_REV else (measure_ids, measure_off)
                    out = np.column_stack([
                        off + np.searchsorted(side_ids, rows[:, 0]),
                        remap_note(rows[:, 1])]) if len(rows) else _empty_edges()
                else:
                    side_ids, off = (beat_ids, beat_off) \
                        if etype is EdgeType.NEXT_BEAT else (measure_ids, measure_off)
                    out = off + np.searchsorted(side_ids, rows) \
                        if len(rows) else _empty_edges()
                edge_chunks.setdefault(etype, []).append(
                    out.astype(np.int64).reshape(-1, 2))

        note_feats.append(g.note_features[nodes])
        onsets.append(g.note_onsets[nodes])
        pitches.append(g.note_pitches[nodes])
        beat_feats.append(g.beat_features[beat_ids])
        measure_feats.append(g.measure_features[measure_ids])

        w = s.targets
        t_new = note_off + np.searchsorted(nodes, w.node_ids())
        target_ids.append(t_new)
        records.append((w.score_index, target_off, w.count))
        target_off += w.count
        note_off += len(nodes)
        beat_off += len(beat_ids)
        measure_off += len(measure_ids)

    k = graphs[samples[0].targets.score_index].feature_width if samples else 0
    edges = {etype: (np.concatenate(chunks) if chunks else _empty_edges())
             for etype, chunks in edge_chunks.items()}
    return Batch(
        edges=edges,
        note_features=(np.concatenate(note_feats) if note_feats
                       else np.zeros((0, k), np.float32)),
        beat_features=(np.concatenate(beat_feats) if beat_feats
                       else np.zeros((0, k), np.float32)),
        measure_features=(np.concatenate(measure_feats) if measure_feats
                          else np.zeros((0, k), np.float32)),
        note_onsets=(np.concatenate(onsets) if onsets
                     else np.empty(0, np.int64)),
        note_pitches=(np.concatenate(pitches) if pitches
                      else np.empty(0, np.int64)),
        target_ids=(np.concatenate(target_ids) if target_ids
                    else np.empty(0, np.int64)),
        score_records=np.array(records, dtype=np.int64).reshape(-1, 3),
        config=config if config is not None else SamplerConfig(),
        batch_index=batch_index)


def unfold_targets(batch: Batch, target_size: int,
                   feature_width: int) -> tuple[np.ndarray, np.ndarray]:
    """Reshape per-score target features into a padded (B, S, K) tensor.

    Row b holds score b's target feature rows in (onset, pitch) order,
    zero-padded to ``target_size``; the mask marks valid positions.
    """
    if feature_width != batch.feature_width:
        raise ConfigError(f"feature width mismatch: batch has "
                          f"{batch.feature_width}, requested {feature_width}")
    b = len(batch.score_records)
    tensor = np.zeros((b, target_size, feature_width), dtype=np.float32)
    mask = np.zeros((b, target_size), dtype=bool)
    for row, (_, offset, count) in enumerate(batch.score_records):
        if count > target_size:
            raise RuntimeError("score target block exceeds the window budget")
        ids = batch.target_ids[offset:offset + count]
        tensor[row, :count] = batch.note_features[ids]
        mask[row, :count] = True
    return tensor, mask


def _check_corpus(corpus: list[ScoreGraph], cfg: SamplerConfig) -> None:
    if not corpus:
        raise ConfigError("corpus is empty")
    if any(g.note_count < 1 for g in corpus):
        raise ConfigError("corpus contains a score with no notes")
    if cfg.include_metrical and any(not g.options.metrical for g in corpus):
        raise ConfigError("include_metrical requires graphs built with "
                          "metrical=True")


def sample_batch(corpus: list[ScoreGraph], cfg: SamplerConfig,
                 batch_index: int = 0) -> Batch:
    """Sample one batch: min(B, |corpus|) distinct scores drawn uniformly,
    each contributing a window -> k-hop -> (metrical) subgraph.

    Fully determined by (corpus, cfg, batch_index); ``batch_index`` is the
    draw counter separating consecutive batches of one stream.
    """
    _check_corpus(corpus, cfg)
    m = min(cfg.scores_per_batch, len(corpus))
    select_rng = _child_rng(cfg.seed, _STREAM_SELECT, batch_index)
    chosen = select_rng.choice(len(corpus), size=m, replace=False)
    samples = []
    for slot, score_index in enumerate(int(i) for i in chosen):
        rng = _child_rng(cfg.seed, _STREAM_SLOT, batch_index, slot)
        g = corpus[score_index]
        window = sample_target_window(g, cfg.target_size, rng,
                                      score_index=score_index)
        sub = sample_khop(g, window, cfg.fanouts, rng)
        if cfg.include_metrical:
            sub = extend_metrical(g, sub)
        samples.append(sub)
    return assemble_batch(samples, corpus, config=cfg, batch_index=batch_index)


def sample_corpus_batches(corpus: list[ScoreGraph], cfg: SamplerConfig,
                          num_batches: int):
    """Yield ``num_batches`` independent batches with consecutive draw counters."""
    _check_corpus(corpus, cfg)
    for i in range(num_batches):
        yield sample_batch(corpus, cfg, batch_index=i)


def iter_epoch(corpus: list[ScoreGraph], cfg: SamplerConfig, epoch: int = 0):
    """Partition the corpus: every score appears in exactly one batch.

    Scores are shuffled once per epoch and consumed in chunks of at most B;
    windows within a chunk use independent derived streams.
    """
    _check_corpus(corpus, cfg)
    perm_rng = _child_rng(cfg.seed, _STREAM_EPOCH, epoch)
    perm = perm_rng.permutation(len(corpus))
    b = cfg.scores_per_batch
    for chunk_index, start in enumerate(range(0, len(perm), b)):
        chunk = perm[start:start + b]
        samples = []
        for slot, score_index in enumerate(int(i) for i in chunk):
            rng = _child_rng(cfg.seed, _STREAM_EPOCH, epoch, chunk_index + 1, slot)
            g = corpus[score_index]
            window = sample_target_window(g, cfg.target_size, rng,
                                          score_index=score_index)
            sub = sample_khop(g, window, cfg.fanouts, rng)
            if cfg.include_metrical:
                sub = extend_metrical(g, sub)
            samples.append(sub)
        yield assemble_batch(samples, corpus, config=cfg,
                             batch_index=chunk_index)
