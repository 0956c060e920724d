"""Corpus fixtures for bridge tests."""

from __future__ import annotations

import numpy as np
import pytest

from scoregraph import serialize_note_json, synthetic_score
from scoregraph.cli import main as scoregraph_main


def vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.insert(0, 0x80 | (value & 0x7F))
        value >>= 7
    return bytes(out)


def simple_midi(notes, ppq: int = 480) -> bytes:
    """Single-track MIDI from (delta_on, length, pitch) triples."""
    body = b""
    for delta_on, length, pitch in notes:
        body += vlq(delta_on) + bytes([0x90, pitch, 64])
        body += vlq(length) + bytes([0x80, pitch, 0])
    body += vlq(0) + bytes([0xFF, 0x2F, 0x00])
    return (b"MThd" + (6).to_bytes(4, "big") + (0).to_bytes(2, "big")
            + (1).to_bytes(2, "big") + ppq.to_bytes(2, "big")
            + b"MTrk" + len(body).to_bytes(4, "big") + body)


@pytest.fixture
def corpus_dirs(tmp_path):
    """(score_dir, graph_dir) with four metrical+inverse graphs built."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(99)))
    scores = tmp_path / "scores"
    scores.mkdir()
    for i in range(4):
        score = synthetic_score(int(rng.integers(30, 100)), rng)
        (scores / f"s{i}.json").write_bytes(serialize_note_json(score))
    graphs = tmp_path / "graphs"
    code = scoregraph_main(["build", "--input", str(scores), "--format",
                            "notes-json", "--out", str(graphs),
                            "--metrical", "--inverse"])
    assert code == 0
    return scores, graphs
