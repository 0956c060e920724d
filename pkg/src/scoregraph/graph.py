"""Heterogeneous score graph construction.

Note-to-note relations connect a pair (u, v) when:

* ``onset``   -- u and v start together: on(u) = on(v)
* ``during``  -- u starts while v is sounding: on(v) < on(u) <= on(v)+dur(v)
* ``follow``  -- u ends exactly when v starts: on(u)+dur(u) = on(v)
* ``silence`` -- u ends before v starts and no note starts strictly inside
  the gap (on(u)+dur(u), on(v))

Boundary cases follow the formal conditions literally: when a note starts
exactly where another ends, both a follow and a during edge are produced;
a note sounding across a gap does not suppress silence edges (only onsets
inside the gap do).  Self-loops are never emitted.

Two builders produce the same edge sets: :func:`build_note_edges_reference`
enumerates all ordered note pairs and transcribes each condition directly
(the testing oracle), while :func:`build_note_edges` exploits the
(onset, pitch) sort order with group indexing so its work is bounded by the
output size plus O(n log n).

An optional metrical layer adds beat and measure nodes spanning the
time-signature grid, ``connect`` edges from each note to the beat/measure
whose span contains its onset, and ``next`` chains between consecutive
spans.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import UnsupportedMeterError, ValidationError
from .score import Score, Violation, validate_score

FEATURE_WIDTH = 23  # 12 pitch classes + 10 octaves + 1 duration

_PITCH_CLASSES = 12
_OCTAVES = 10


class EdgeType(str, Enum):
    ONSET = "onset"
    DURING = "during"
    FOLLOW = "follow"
    SILENCE = "silence"
    DURING_REV = "during_rev"
    FOLLOW_REV = "follow_rev"
    SILENCE_REV = "silence_rev"
    CONNECT_BEAT = "connect_beat"
    CONNECT_BEAT_REV = "connect_beat_rev"
    NEXT_BEAT = "next_beat"
    CONNECT_MEASURE = "connect_measure"
    CONNECT_MEASURE_REV = "connect_measure_rev"
    NEXT_MEASURE = "next_measure"


BASE_NOTE_RELATIONS = (EdgeType.ONSET, EdgeType.DURING,
                       EdgeType.FOLLOW, EdgeType.SILENCE)
INVERTIBLE_RELATIONS = {EdgeType.DURING: EdgeType.DURING_REV,
                        EdgeType.FOLLOW: EdgeType.FOLLOW_REV,
                        EdgeType.SILENCE: EdgeType.SILENCE_REV}
NOTE_RELATIONS = BASE_NOTE_RELATIONS + tuple(INVERTIBLE_RELATIONS.values())
METRICAL_EDGE_TYPES = (EdgeType.CONNECT_BEAT, EdgeType.CONNECT_BEAT_REV,
                       EdgeType.NEXT_BEAT, EdgeType.CONNECT_MEASURE,
                       EdgeType.CONNECT_MEASURE_REV, EdgeType.NEXT_MEASURE)


@dataclass(frozen=True)
class GraphOptions:
    inverse_edges: bool = False
    metrical: bool = False


@dataclass(eq=False)
class ScoreGraph:
    """Immutable heterogeneous attributed graph for one score.

    Node types are notes, beats and measures, each with a dense 0-based id
    space.  ``edges`` maps each present :class:`EdgeType` to an (E, 2) int64
    array of (src, dst) pairs, duplicate-free and lexicographically sorted.
    """

    note_count: int
    beat_count: int
    measure_count: int
    edges: dict[EdgeType, np.ndarray]
    note_features: np.ndarray
    beat_features: np.ndarray
    measure_features: np.ndarray
    note_onsets: np.ndarray
    note_pitches: np.ndarray
    beat_spans: np.ndarray
    measure_spans: np.ndarray
    divisions_per_quarter: int
    options: GraphOptions
    source_name: str = ""
    _in_adj: dict = field(default_factory=dict, repr=False)

    @property
    def feature_width(self) -> int:
        return self.note_features.shape[1]

    def num_edges(self) -> int:
        return sum(len(rows) for rows in self.edges.values())

    def in_adjacency(self, etype: EdgeType) -> tuple[np.ndarray, np.ndarray]:
        """CSR over destination note ids: (indptr, edge rows by (dst, src)).

        Only meaningful for note-to-note relations; cached per graph.
        """
        cached = self._in_adj.get(etype)
        if cached is not None:
            return cached
        rows = self.edges[etype]
        if len(rows):
            order = np.lexsort((rows[:, 0], rows[:, 1]))
            rows = rows[order]
        counts = np.bincount(rows[:, 1], minlength=self.note_count) \
            if len(rows) else np.zeros(self.note_count, dtype=np.int64)
        indptr = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
        self._in_adj[etype] = (indptr, rows)
        return indptr, rows


def _edge_array(src, dst) -> np.ndarray:
    rows = np.column_stack([np.asarray(src, dtype=np.int64),
                            np.asarray(dst, dtype=np.int64)])
    if rows.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(rows, axis=0)


def _empty_edges() -> np.ndarray:
    return np.empty((0, 2), dtype=np.int64)


def _multirange(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenate the index ranges [starts[i], starts[i]+counts[i])."""
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    seg = np.repeat(np.arange(len(counts)), counts)
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    pos = np.arange(total, dtype=np.int64) - offsets[seg]
    return starts[seg] + pos


def _note_arrays(score: Score):
    n = len(score.notes)
    onset = np.fromiter((nt.onset for nt in score.notes), np.int64, count=n)
    dur = np.fromiter((nt.duration for nt in score.notes), np.int64, count=n)
    pitch = np.fromiter((nt.pitch for nt in score.notes), np.int64, count=n)
    return onset, dur, pitch


def _check_sorted(score: Score) -> None:
    keys = [(nt.onset, nt.pitch) for nt in score.notes]
    if any(a > b for a, b in zip(keys, keys[1:])):
        raise ValidationError(
            [Violation("notes", "score must be sorted with sort_score first")])


def build_note_edges_reference(score: Score) -> dict[EdgeType, np.ndarray]:
    """Oracle edge builder: evaluate the four conditions over all pairs.

    Works in row blocks so its cost is a flat Theta(n^2) regardless of edge
    density; never uses the sort-order shortcuts of the optimized builder.
    """
    _check_sorted(score)
    n = len(score.notes)
    base = {t: [] for t in BASE_NOTE_RELATIONS}
    if n == 0:
        return {t: _empty_edges() for t in BASE_NOTE_RELATIONS}
    onset, dur, _ = _note_arrays(score)
    end = onset + dur
    ids = np.arange(n, dtype=np.int64)
    sentinel = int(onset.max()) + 1
    block = 256
    for b0 in range(0, n, block):
        b1 = min(b0 + block, n)
        on_u = onset[b0:b1, None]
        end_u = end[b0:b1, None]
        on_v = onset[None, :]
        end_v = end[None, :]
        not_self = ids[b0:b1, None] != ids[None, :]

        onset_m = (on_u == on_v) & not_self
        during_m = (on_u > on_v) & (on_u <= end_v)
        follow_m = (end_u == on_v) & not_self
        later = on_v > end_u
        min_next = np.where(later, on_v, sentinel).min(axis=1, keepdims=True)
        silence_m = later & (on_v <= min_next)

        for etype, mask in ((EdgeType.ONSET, onset_m),
                            (EdgeType.DURING, during_m),
                            (EdgeType.FOLLOW, follow_m),
                            (EdgeType.SILENCE, silence_m)):
            us, vs = np.nonzero(mask)
            if len(us):
                base[etype].append(np.column_stack([us + b0, vs]))
    return {
        t: (_edge_array(np.concatenate(chunks)[:, 0], np.concatenate(chunks)[:, 1])
            if chunks else _empty_edges())
        for t, chunks in base.items()
    }


def build_note_edges(score: Score) -> dict[EdgeType, np.ndarray]:
    """Windowed edge builder equivalent to the pairwise reference.

    Onset groups are located once with binary search; each relation is then
    emitted as contiguous index ranges, so total work is proportional to the
    number of edges produced plus O(n log n) indexing.
    """
    _check_sorted(score)
    n = len(score.notes)
    if n == 0:
        return {t: _empty_edges() for t in BASE_NOTE_RELATIONS}
    onset, dur, _ = _note_arrays(score)
    end = onset + dur
    ids = np.arange(n, dtype=np.int64)
    uniq, gstart = np.unique(onset, return_index=True)
    gend = np.append(gstart[1:], n)

    out: dict[EdgeType, np.ndarray] = {}

    srcs, dsts = [], []
    for a, b in zip(gstart, gend):
        size = b - a
        if size >= 2:
            group = ids[a:b]
            s = np.repeat(group, size)
            d = np.tile(group, size)
            keep = s != d
            srcs.append(s[keep])
            dsts.append(d[keep])
    out[EdgeType.ONSET] = (_edge_array(np.concatenate(srcs), np.concatenate(dsts))
                           if srcs else _empty_edges())

    # during: u ranges over onsets in (on(v), end(v)]
    lo = np.searchsorted(onset, onset, side="right")
    hi = np.searchsorted(onset, end, side="right")
    counts = hi - lo
    u_idx = _multirange(lo, counts)
    v_idx = np.repeat(ids, counts)
    out[EdgeType.DURING] = _edge_array(u_idx, v_idx)

    # follow: sources are notes whose end equals the group onset
    eorder = np.argsort(end, kind="stable")
    esorted = end[eorder]
    srcs, dsts = [], []
    for gi, (a, b) in enumerate(zip(gstart, gend)):
        t = uniq[gi]
        p = np.searchsorted(esorted, t, side="left")
        q = np.searchsorted(esorted, t, side="right")
        if q > p:
            us = eorder[p:q]
            group = ids[a:b]
            s = np.repeat(us, b - a)
            d = np.tile(group, q - p)
            keep = s != d
            srcs.append(s[keep])
            dsts.append(d[keep])
    out[EdgeType.FOLLOW] = (_edge_array(np.concatenate(srcs), np.concatenate(dsts))
                            if srcs else _empty_edges())

    # silence: destinations are the whole first onset group after u's end
    gi = np.searchsorted(uniq, end, side="right")
    valid = gi < len(uniq)
    gsel = gi[valid]
    vcounts = (gend - gstart)[gsel]
    dst = _multirange(gstart[gsel], vcounts)
    src = np.repeat(ids[valid], vcounts)
    out[EdgeType.SILENCE] = _edge_array(src, dst)
    return out


def add_inverse_edges(edges: dict[EdgeType, np.ndarray]) -> dict[EdgeType, np.ndarray]:
    """Add reversed during/follow/silence relations (onset is symmetric already)."""
    out = dict(edges)
    for base_type, rev_type in INVERTIBLE_RELATIONS.items():
        rows = edges.get(base_type)
        if rows is None:
            continue
        out[rev_type] = _edge_array(rows[:, 1], rows[:, 0]) if len(rows) \
            else _empty_edges()
    return out


# ---------------------------------------------------------------------------
# metrical grid
# ---------------------------------------------------------------------------

def _beat_length(divisions_per_quarter: int, denominator: int) -> int:
    if denominator < 1 or denominator & (denominator - 1):
        raise UnsupportedMeterError(
            f"denominator {denominator} is not a power of two")
    total = 4 * divisions_per_quarter
    if total % denominator:
        raise UnsupportedMeterError(
            f"beat length {total}/{denominator} divisions is not integral")
    length = total // denominator
    if length == 0:
        raise UnsupportedMeterError(
            f"beat of 0 divisions (divisions_per_quarter={divisions_per_quarter}, "
            f"denominator={denominator})")
    return length


def build_metrical_grid(score: Score) -> tuple[np.ndarray, np.ndarray]:
    """Tile the score's time extent with beat and measure spans.

    Measures restart at every time-signature boundary; the last region is
    extended so the final measure boundary covers every note onset.  Returns
    (beat_spans, measure_spans) as (m, 2) int64 [start, end) arrays.
    """
    if not score.notes:
        return np.empty((0, 2), np.int64), np.empty((0, 2), np.int64)
    needed_end = max(max(n.onset + n.duration, n.onset + 1) for n in score.notes)
    sigs = list(score.time_sigs) or [type(score.time_sigs[0])(0, 4, 4)]

    beats: list[tuple[int, int]] = []
    measures: list[tuple[int, int]] = []
    for i, sig in enumerate(sigs):
        beat_len = _beat_length(score.divisions_per_quarter, sig.denominator)
        measure_len = sig.numerator * beat_len
        bound = sigs[i + 1].at if i + 1 < len(sigs) else None
        t = sig.at
        while (bound is None and t < needed_end) or (bound is not None and t < bound):
            end = t + measure_len
            if bound is not None:
                end = min(end, bound)
            measures.append((t, end))
            s = t
            while s < end:
                beats.append((s, min(s + beat_len, end)))
                s += beat_len
            t = end
    return (np.array(beats, dtype=np.int64).reshape(-1, 2),
            np.array(measures, dtype=np.int64).reshape(-1, 2))


def _connect_edges(note_onsets: np.ndarray, spans: np.ndarray, label: str):
    if len(note_onsets) == 0:
        return _empty_edges()
    if len(spans) == 0:
        raise RuntimeError(f"{label} grid does not cover the score extent")
    idx = np.searchsorted(spans[:, 0], note_onsets, side="right") - 1
    if (idx < 0).any() or (note_onsets >= spans[idx, 1]).any():
        raise RuntimeError(f"note onset outside the {label} grid")
    return _edge_array(np.arange(len(note_onsets)), idx)


def _chain_edges(count: int) -> np.ndarray:
    if count < 2:
        return _empty_edges()
    ids = np.arange(count, dtype=np.int64)
    return np.column_stack([ids[:-1], ids[1:]])


def attach_metrical_nodes(graph: ScoreGraph, beat_spans: np.ndarray,
                          measure_spans: np.ndarray) -> ScoreGraph:
    """Attach beat/measure nodes: connect edges by onset containment
    (half-open spans), next edges chaining the time-sorted spans."""
    edges = dict(graph.edges)
    edges[EdgeType.CONNECT_BEAT] = _connect_edges(
        graph.note_onsets, beat_spans, "beat")
    edges[EdgeType.NEXT_BEAT] = _chain_edges(len(beat_spans))
    edges[EdgeType.CONNECT_MEASURE] = _connect_edges(
        graph.note_onsets, measure_spans, "measure")
    edges[EdgeType.NEXT_MEASURE] = _chain_edges(len(measure_spans))
    if graph.options.inverse_edges:
        cb = edges[EdgeType.CONNECT_BEAT]
        cm = edges[EdgeType.CONNECT_MEASURE]
        edges[EdgeType.CONNECT_BEAT_REV] = _edge_array(cb[:, 1], cb[:, 0]) \
            if len(cb) else _empty_edges()
        edges[EdgeType.CONNECT_MEASURE_REV] = _edge_array(cm[:, 1], cm[:, 0]) \
            if len(cm) else _empty_edges()
    k = graph.feature_width
    return replace(graph, edges=edges,
                   beat_count=len(beat_spans), measure_count=len(measure_spans),
                   beat_spans=beat_spans, measure_spans=measure_spans,
                   beat_features=np.zeros((len(beat_spans), k), np.float32),
                   measure_features=np.zeros((len(measure_spans), k), np.float32),
                   _in_adj={})


def compute_note_features(score: Score) -> np.ndarray:
    """Default 23-wide note features.

    Layout: pitch-class one-hot (12), octave one-hot (10, octave clamped to
    0..9), then one duration value min(dur / (4 * divisions), 4) / 4.
    """
    n = len(score.notes)
    feats = np.zeros((n, FEATURE_WIDTH), dtype=np.float32)
    if n == 0:
        return feats
    onset, dur, pitch = _note_arrays(score)
    del onset
    rows = np.arange(n)
    feats[rows, pitch % _PITCH_CLASSES] = 1.0
    octave = np.clip(pitch // _PITCH_CLASSES, 0, _OCTAVES - 1)
    feats[rows, _PITCH_CLASSES + octave] = 1.0
    quarters = dur.astype(np.float64) / (4.0 * score.divisions_per_quarter)
    feats[:, -1] = (np.minimum(quarters, 4.0) / 4.0).astype(np.float32)
    return feats


def _mean_by_group(features: np.ndarray, group_idx: np.ndarray,
                   group_count: int) -> np.ndarray:
    out = np.zeros((group_count, features.shape[1]), dtype=np.float64)
    if len(group_idx):
        np.add.at(out, group_idx, features.astype(np.float64))
        counts = np.bincount(group_idx, minlength=group_count)
        nz = counts > 0
        out[nz] /= counts[nz, None]
    return out.astype(np.float32)


def aggregate_metrical_features(graph: ScoreGraph) -> ScoreGraph:
    """Set each beat/measure feature to the mean of its connected notes;
    spans containing no note onset keep the zero vector."""
    cb = graph.edges[EdgeType.CONNECT_BEAT]
    cm = graph.edges[EdgeType.CONNECT_MEASURE]
    beat_feats = _mean_by_group(graph.note_features[cb[:, 0]], cb[:, 1],
                                graph.beat_count)
    measure_feats = _mean_by_group(graph.note_features[cm[:, 0]], cm[:, 1],
                                   graph.measure_count)
    return replace(graph, beat_features=beat_feats,
                   measure_features=measure_feats, _in_adj={})


def build_score_graph(score: Score, options: GraphOptions = GraphOptions(),
                      note_features: np.ndarray | None = None) -> ScoreGraph:
    """Build the full heterogeneous graph for one sorted, valid score.

    ``note_features`` overrides the default feature computation (any float
    matrix with one row per note).  Deterministic for fixed input+options.
    """
    violations = validate_score(score)
    if violations:
        raise ValidationError(violations)
    edges = build_note_edges(score)
    if options.inverse_edges:
        edges = add_inverse_edges(edges)
    if note_features is None:
        note_features = compute_note_features(score)
    else:
        note_features = np.asarray(note_features, dtype=np.float32)
        if note_features.ndim != 2 or note_features.shape[0] != len(score.notes):
            raise ValidationError(
                [Violation("note_features",
                           f"expected ({len(score.notes)}, K) matrix, "
                           f"got {note_features.shape}")])
    onset, _, pitch = _note_arrays(score)
    k = note_features.shape[1]
    graph = ScoreGraph(
        note_count=len(score.notes), beat_count=0, measure_count=0,
        edges=edges, note_features=note_features,
        beat_features=np.zeros((0, k), np.float32),
        measure_features=np.zeros((0, k), np.float32),
        note_onsets=onset, note_pitches=pitch,
        beat_spans=np.empty((0, 2), np.int64),
        measure_spans=np.empty((0, 2), np.int64),
        divisions_per_quarter=score.divisions_per_quarter,
        options=options, source_name=score.source_name)
    if options.metrical:
        beat_spans, measure_spans = build_metrical_grid(score)
        graph = attach_metrical_nodes(graph, beat_spans, measure_spans)
        graph = aggregate_metrical_features(graph)
    return graph
