"""Shared builders for scores, MIDI bytes, and random graphs."""

from __future__ import annotations

import numpy as np
import pytest

from scoregraph import (GraphOptions, Note, Score, TimeSigEvent,
                        build_score_graph, sort_score)


def make_score(notes, divisions=4, time_sigs=((0, 4, 4),), sort=True,
               name="test") -> Score:
    """Build a Score from (onset, duration, pitch) tuples."""
    note_objs = tuple(Note(id=i, onset=o, duration=d, pitch=p)
                      for i, (o, d, p) in enumerate(notes))
    sigs = tuple(TimeSigEvent(at=a, numerator=n, denominator=d)
                 for a, n, d in time_sigs)
    score = Score(notes=note_objs, divisions_per_quarter=divisions,
                  time_sigs=sigs, source_name=name)
    if sort:
        score, _ = sort_score(score)
    return score


def random_graph(rng, num_notes=None, options=GraphOptions(), **synth_kwargs):
    from scoregraph import synthetic_score
    if num_notes is None:
        num_notes = int(rng.integers(1, 120))
    score = synthetic_score(num_notes, rng, **synth_kwargs)
    return build_score_graph(score, options)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(1234)))


# --- minimal MIDI byte assembly ----------------------------------------------

def vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.insert(0, 0x80 | (value & 0x7F))
        value >>= 7
    return bytes(out)


def note_on(channel: int, pitch: int, velocity: int = 64) -> bytes:
    return bytes([0x90 | channel, pitch, velocity])


def note_off(channel: int, pitch: int, velocity: int = 0) -> bytes:
    return bytes([0x80 | channel, pitch, velocity])


def time_sig_meta(numerator: int, denominator_pow: int) -> bytes:
    return bytes([0xFF, 0x58, 0x04, numerator, denominator_pow, 24, 8])


END_OF_TRACK = bytes([0xFF, 0x2F, 0x00])


def track_chunk(events: list[tuple[int, bytes]], end_delta: int = 0) -> bytes:
    body = b"".join(vlq(delta) + payload for delta, payload in events)
    body += vlq(end_delta) + END_OF_TRACK
    return b"MTrk" + len(body).to_bytes(4, "big") + body


def midi_file(tracks: list[list[tuple[int, bytes]]], ppq: int = 480,
              fmt: int | None = None, end_deltas=None) -> bytes:
    fmt = fmt if fmt is not None else (0 if len(tracks) == 1 else 1)
    end_deltas = end_deltas or [0] * len(tracks)
    header = b"MThd" + (6).to_bytes(4, "big") + \
        fmt.to_bytes(2, "big") + len(tracks).to_bytes(2, "big") + \
        ppq.to_bytes(2, "big")
    return header + b"".join(track_chunk(t, d)
                             for t, d in zip(tracks, end_deltas))
