"""Seeded folk-style tune generator for demos and offline test corpora.

Tunes are monophonic 4/4 melodies in AABB form with an optional bass note
per bar, built from a small stock of dance-tune rhythms. They are not meant
to sound good, only to have the repetition and rhythmic regularity of real
folk collections.
"""

from __future__ import annotations

import numpy as np

from .smf import NoteEvent, Score, TempoChange, TimeSignature

DIVISION = 480
EIGHTH = DIVISION // 2

MAJOR = (0, 2, 4, 5, 7, 9, 11)
DORIAN = (0, 2, 3, 5, 7, 9, 10)
MIXOLYDIAN = (0, 2, 4, 5, 7, 9, 10)

# bar rhythms in eighth notes, each summing to 8
RHYTHMS = (
    (2, 2, 2, 2),
    (1, 1, 2, 2, 2),
    (3, 1, 2, 2),
    (2, 1, 1, 2, 2),
    (4, 2, 2),
    (1, 1, 1, 1, 2, 2),
    (2, 2, 4),
    (1, 1, 1, 1, 1, 1, 2),
)


def _phrase(rng: np.random.Generator, n_bars: int, start_degree: int) -> list[list[tuple[int, int]]]:
    """Bars of (scale degree, length in eighths); the phrase ends on the tonic."""
    bars = []
    degree = start_degree
    for b in range(n_bars):
        rhythm = RHYTHMS[rng.integers(len(RHYTHMS))]
        notes = []
        for length in rhythm:
            degree = int(np.clip(degree + rng.choice([-2, -1, -1, 0, 1, 1, 2]), -3, 9))
            notes.append((degree, length))
        bars.append(notes)
    last_degree, last_len = bars[-1][-1]
    bars[-1][-1] = (7 if last_degree >= 4 else 0, last_len)
    return bars


def folk_tune(seed: int, n_bars: int = 16, with_bass: bool = True) -> Score:
    rng = np.random.default_rng(seed)
    mode = (MAJOR, DORIAN, MIXOLYDIAN)[rng.integers(3)]
    tonic = 60 + int(rng.integers(-5, 7))
    velocity = int(rng.integers(60, 105))
    tempo = int(60_000_000 // rng.integers(90, 131))

    half = max(1, n_bars // 4)
    part_a = _phrase(rng, half, 0)
    part_b = _phrase(rng, half, 4)
    body = part_a + part_a + part_b + part_b
    body = (body * (n_bars // len(body) + 1))[:n_bars]

    def pitch(degree: int) -> int:
        octave, step = divmod(degree, 7)
        return tonic + 12 * octave + mode[step]

    notes = []
    for bar, bar_notes in enumerate(body):
        tick = bar * 8 * EIGHTH
        for degree, length in bar_notes:
            notes.append(NoteEvent(pitch(degree), velocity, tick, length * EIGHTH))
            tick += length * EIGHTH
        if with_bass:
            root = 0 if bar % 2 == 0 else 4
            notes.append(NoteEvent(pitch(root) - 24, velocity - 10, bar * 8 * EIGHTH, 4 * EIGHTH))
    return Score(DIVISION, tuple(notes), (TempoChange(0, tempo),), (TimeSignature(0, 4, 4),))


def folk_corpus(n_songs: int, seed: int = 0, n_bars: int = 16) -> list[Score]:
    seeds = np.random.SeedSequence(seed).generate_state(n_songs)
    return [folk_tune(int(s), n_bars) for s in seeds]
