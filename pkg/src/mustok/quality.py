"""Pitch-class entropy and groove pattern similarity."""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from itertools import combinations

from .errors import BarOutOfRange, NoPitchedNotes, TooFewBars
from .smf import PERCUSSION_CHANNEL, Score

MAX_ENTROPY = math.log2(12)


@dataclass(frozen=True)
class PitchClassHistogram:
    weights: tuple[float, ...]  # C, C#, ..., B


@dataclass(frozen=True)
class GrooveVector:
    bits: tuple[bool, ...]
    bar_index: int


def pitch_class_histogram(score: Score) -> PitchClassHistogram:
    counts = [0] * 12
    for n in score.notes:
        if n.channel != PERCUSSION_CHANNEL:
            counts[n.pitch % 12] += 1
    total = sum(counts)
    if not total:
        raise NoPitchedNotes("score has no pitched notes")
    return PitchClassHistogram(tuple(c / total for c in counts))


def pitch_class_entropy(h: PitchClassHistogram | Score) -> float:
    """Base-2 entropy of the pitch-class histogram, in ``[0, log2 12]``."""
    if isinstance(h, Score):
        h = pitch_class_histogram(h)
    return max(0.0, -sum(w * math.log2(w) for w in h.weights if w > 0))


def bars(score: Score) -> list[tuple[int, int]]:
    """``(start tick, length)`` of every bar up to the one holding the last onset.

    Bar lengths follow the time signatures (4/4 before the first one); a
    signature change mid-bar cuts the running bar short.
    """
    last_onset = max((n.onset_tick for n in score.notes), default=0)
    sigs = [(s.tick, s.numerator, s.denominator) for s in score.time_signatures]
    if not sigs or sigs[0][0] > 0:
        sigs.insert(0, (0, 4, 4))
    out = []
    for i, (tick, num, den) in enumerate(sigs):
        length = score.division * 4 * num // den
        until = sigs[i + 1][0] if i + 1 < len(sigs) else last_onset + 1
        t = tick
        while t < until:
            out.append((t, min(length, until - t) if i + 1 < len(sigs) else length))
            t += length
    return out or [(0, score.division * 4)]


def groove_vectors(score: Score, positions: int = 16) -> list[GrooveVector]:
    """Onset-position vectors for every bar of the score.

    An onset is snapped to the nearest cell of its bar's grid (ties go
    later); snapping past the last cell moves it to cell 0 of the next bar.
    """
    grid = bars(score)
    starts = [start for start, _ in grid]
    bits = [[False] * positions for _ in grid]
    for n in score.notes:
        b = bisect_right(starts, n.onset_tick) - 1
        start, length = grid[b]
        cell = math.floor((n.onset_tick - start) * positions / length + 0.5)
        if cell >= positions:
            b, cell = b + 1, 0
            if b == len(bits):
                bits.append([False] * positions)
        bits[b][cell] = True
    return [GrooveVector(tuple(v), i) for i, v in enumerate(bits)]


def groove_vector(score: Score, bar_index: int, positions: int = 16) -> GrooveVector:
    vectors = groove_vectors(score, positions)
    if not 0 <= bar_index < len(vectors):
        raise BarOutOfRange(f"bar {bar_index} is outside 0..{len(vectors) - 1}")
    return vectors[bar_index]


def groove_similarity(score: Score, positions: int = 16) -> float:
    """Mean of ``1 - hamming(g_a, g_b) / positions`` over all bar pairs."""
    vectors = groove_vectors(score, positions) if score.notes else []
    if len(vectors) < 2:
        raise TooFewBars(f"groove similarity needs at least 2 bars, got {len(vectors)}")
    total = 0.0
    pairs = 0
    for a, b in combinations(vectors, 2):
        total += 1 - sum(x != y for x, y in zip(a.bits, b.bits)) / positions
        pairs += 1
    return total / pairs
