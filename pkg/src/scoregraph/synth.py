"""Synthetic score generation for benchmarks and randomized tests."""

from __future__ import annotations

import numpy as np

from .score import Note, Score, TimeSigEvent, sort_score


def synthetic_score(num_notes: int, rng: np.random.Generator,
                    chord_prob: float = 0.35, zero_duration_prob: float = 0.05,
                    divisions: int = 12, max_step: int = 12,
                    max_duration: int = 48) -> Score:
    """Random score with chord clusters and occasional grace notes.

    Onsets advance by a random step with probability ``1 - chord_prob``,
    otherwise the next note lands on the same onset (a chord).
    """
    notes = []
    onset = 0
    for i in range(num_notes):
        if i > 0 and rng.random() >= chord_prob:
            onset += int(rng.integers(1, max_step + 1))
        duration = 0 if rng.random() < zero_duration_prob \
            else int(rng.integers(1, max_duration + 1))
        pitch = int(rng.integers(21, 109))
        notes.append(Note(id=i, onset=onset, duration=duration, pitch=pitch))
    score = Score(notes=tuple(notes), divisions_per_quarter=divisions,
                  time_sigs=(TimeSigEvent(0, 4, 4),),
                  source_name=f"synthetic-{num_notes}")
    score, _ = sort_score(score)
    return score
