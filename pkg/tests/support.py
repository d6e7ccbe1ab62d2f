"""Generators and brute-force oracles shared by the test modules.

Everything here is written from the definitions, independently of the
optimised code under test.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np

from mustok.smf import NoteEvent, Score, TempoChange, TimeSignature
from mustok.tokens import TokenizerConfig


# -- random scores


def random_quantized_score(rng: np.random.Generator, n_notes: int = 40, n_bars: int = 8,
                           cfg: TokenizerConfig = TokenizerConfig(), tempo: int = 500_000) -> Score:
    """Grid-aligned notes with binned durations and velocities.

    Notes sharing a pitch never overlap: a MIDI channel cannot tell such
    notes apart, so no file format could round-trip them.
    """
    grid = cfg.grid
    busy: dict[int, list[tuple[int, int]]] = {}
    notes = []
    for _ in range(20 * n_notes):
        if len(notes) == n_notes:
            break
        pitch = int(rng.integers(21, 109))
        onset = int(rng.integers(n_bars * cfg.positions_per_bar)) * grid
        dur = cfg.duration_ticks(int(rng.choice(cfg.duration_bins[:32])))
        if any(a < onset + dur and onset < b for a, b in busy.get(pitch, [])):
            continue
        busy.setdefault(pitch, []).append((onset, onset + dur))
        vel = cfg.velocity_value(int(rng.integers(1, cfg.velocity_bins + 1)))
        notes.append(NoteEvent(pitch, vel, onset, dur))
    return Score(cfg.division, tuple(notes), (TempoChange(0, tempo),), (TimeSignature(0, 4, 4),))


def random_score(rng: np.random.Generator, n_notes: int = 30, division: int = 480,
                 percussion: bool = True) -> Score:
    """Unquantized notes on arbitrary ticks, sometimes on the drum channel."""
    notes = []
    for _ in range(n_notes):
        channel = 9 if percussion and rng.random() < 0.15 else int(rng.integers(0, 4))
        notes.append(NoteEvent(int(rng.integers(0, 128)), int(rng.integers(1, 128)),
                               int(rng.integers(0, division * 4 * 12)),
                               int(rng.integers(1, division * 4)), channel))
    return Score(division, tuple(notes))


# -- BPE


def naive_bpe(texts: list[str], target_vocab: int, min_count: int = 2) -> list[tuple[str, str]]:
    """Greedy BPE that recounts every pair from scratch at each step."""
    songs = [list(t) for t in texts]
    vocab = set("".join(texts))
    merges = []
    while len(vocab) < target_vocab:
        counts: Counter = Counter()
        first: dict = {}
        for sid, s in enumerate(songs):
            for i in range(len(s) - 1):
                pair = (s[i], s[i + 1])
                counts[pair] += 1
                first.setdefault(pair, (sid, i))
        if not counts:
            break
        best = min(counts, key=lambda p: (-counts[p], first[p], p))
        if counts[best] < min_count:
            break
        merges.append(best)
        vocab.add(best[0] + best[1])
        for sid, s in enumerate(songs):
            out, i = [], 0
            while i < len(s):
                if i + 1 < len(s) and (s[i], s[i + 1]) == best:
                    out.append(s[i] + s[i + 1])
                    i += 2
                else:
                    out.append(s[i])
                    i += 1
            songs[sid] = out
    return merges


def markov_corpus(rng: np.random.Generator, n_symbols: int, n_songs: int, song_len: int,
                  successors: int = 3, base: int = 0x4E00) -> list[str]:
    """Songs from a sparse Markov chain, so adjacent pairs repeat often."""
    nxt = rng.integers(0, n_symbols, size=(n_symbols, successors))
    texts = []
    for sid in range(n_songs):
        state = int(rng.integers(n_symbols))
        out = []
        for _ in range(song_len):
            out.append(chr(base + state))
            state = int(nxt[state, rng.integers(successors)]) if rng.random() < 0.9 \
                else int(rng.integers(n_symbols))
        texts.append("".join(out))
    # make sure every symbol of the alphabet occurs
    texts.append("".join(chr(base + i) for i in range(n_symbols)))
    return texts


# -- unigram


def segmentations(text: str, pieces: set[str]):
    """Every way of writing ``text`` as a concatenation of ``pieces``."""
    if not text:
        yield ()
        return
    for k in range(1, len(text) + 1):
        head = text[:k]
        if head in pieces:
            for rest in segmentations(text[k:], pieces):
                yield (head, *rest)


def best_segmentation_log_prob(text: str, log_probs: dict[str, float]) -> float:
    return max(sum(log_probs[p] for p in seg) for seg in segmentations(text, set(log_probs)))


def exact_log_likelihood(texts: list[str], log_probs: dict[str, float]) -> float:
    total = 0.0
    for t in texts:
        total += math.log(math.fsum(math.exp(sum(log_probs[p] for p in seg))
                                    for seg in segmentations(t, set(log_probs))))
    return total


def exact_em_step(texts: list[str], probs: dict[str, float]) -> dict[str, float]:
    """One EM update by enumerating every segmentation of every song."""
    expected: Counter = Counter()
    for t in texts:
        segs = list(segmentations(t, set(probs)))
        weights = [math.prod(probs[p] for p in seg) for seg in segs]
        z = math.fsum(weights)
        for seg, w in zip(segs, weights):
            for p in seg:
                expected[p] += w / z
    total = math.fsum(expected.values())
    return {p: c / total for p, c in expected.items()}


# -- quality metrics, straight from the definitions


def entropy_by_definition(score: Score) -> float:
    pcs = [n.pitch % 12 for n in score.notes if n.channel != 9]
    counts = Counter(pcs)
    total = len(pcs)
    return -sum((c / total) * math.log2(c / total) for c in counts.values())


def groove_by_definition(score: Score, positions: int = 16) -> float:
    """4/4 throughout; every onset goes to the nearest of the bar's cells."""
    bar = score.division * 4
    last = max(n.onset_tick for n in score.notes)
    n_bars = last // bar + 1
    cells = [set() for _ in range(n_bars + 1)]
    for n in score.notes:
        exact = n.onset_tick * positions / bar
        slot = math.floor(exact + 0.5)
        cells[slot // positions].add(slot % positions)
    if not cells[-1]:
        cells.pop()
    sims = [1 - len(a ^ b) / positions for a, b in itertools.combinations(cells, 2)]
    return sum(sims) / len(sims)


# -- structure


def enumerate_path_families(S: np.ndarray, start: int, length: int):
    """All families of time-disjoint paths through the segment's columns.

    Yields ``(score, cells, coverage)`` per family. Paths take steps
    (1,1), (1,2), (2,1) and run from the segment's first column to its last.
    """
    n = S.shape[0]
    cols = range(start, start + length)

    def paths_from(row, m):
        # paths starting at (row, column m of the segment)
        if m == length - 1:
            yield [(row, cols[m])]
            return
        for dr, dm in ((1, 1), (1, 2), (2, 1)):
            r2, m2 = row + dr, m + dm
            if r2 < n and m2 < length:
                for rest in paths_from(r2, m2):
                    yield [(row, cols[m])] + rest

    all_paths = [p for r in range(n) for p in paths_from(r, 0)]

    def families(min_row):
        yield []
        for p in all_paths:
            if p[0][0] >= min_row:
                for rest in families(p[-1][0] + 1):
                    yield [p] + rest

    for fam in families(0):
        score = sum(S[r, c] for p in fam for r, c in p)
        cells = sum(len(p) for p in fam)
        coverage = sum(p[-1][0] - p[0][0] + 1 for p in fam)
        yield float(score), cells, coverage


def best_family(S: np.ndarray, start: int, length: int) -> tuple[float, int, int]:
    return max(enumerate_path_families(S, start, length), key=lambda f: (f[0], -f[1], f[2]))


def fitness_by_definition(S: np.ndarray, start: int, length: int) -> float:
    n = S.shape[0]
    score, cells, coverage = best_family(S, start, length)
    if cells == 0:
        return 0.0
    sn = (score - length) / cells
    cn = (coverage - length) / n
    if sn <= 0 or cn <= 0:
        return 0.0
    return min(1.0, 2 * sn * cn / (sn + cn))


def repetition_ssm(n: int = 8) -> np.ndarray:
    """Two identical halves of distinct frames: ones on the main and both half diagonals."""
    idx = np.arange(n)
    return (idx[:, None] % (n // 2) == idx[None, :] % (n // 2)).astype(float)


def motif_score(seed: int, repeats: int = 4, motif_s: float = 5.0, shuffled: bool = False) -> Score:
    """A seeded motif played ``repeats`` times back to back.

    The control keeps the exact note content but shuffles half-second slices
    of the whole piece, which destroys the repetition.
    """
    rng = np.random.default_rng(seed)
    division = 480
    slice_ticks = division  # 0.5 s at 120 BPM
    n_slices = int(round(motif_s / 0.5))
    # one or two notes per slice, random pitches from a wide range
    motif = []
    for k in range(n_slices):
        for _ in range(int(rng.integers(1, 3))):
            motif.append((k, int(rng.integers(48, 84))))
    order = np.arange(n_slices * repeats)
    if shuffled:
        rng.shuffle(order)
    notes = []
    for r in range(repeats):
        for k, pitch in motif:
            slot = int(order[r * n_slices + k])
            notes.append(NoteEvent(pitch, 80, slot * slice_ticks, slice_ticks))
    return Score(division, tuple(notes), (TempoChange(0, 500_000),))
