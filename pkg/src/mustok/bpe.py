"""Byte-pair encoding over symbol strings.

Pieces are plain strings (concatenations of base symbols). Pairs never
straddle two songs.
"""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

from .errors import EmptyCorpus, TargetBelowBase, UnknownPiece, UnknownSymbol
from .symbols import Alphabet, SymbolString

MIN_PAIR_COUNT = 2


@dataclass(frozen=True)
class SubwordSequence:
    pieces: tuple[int, ...]
    song_id: str = ""

    def __len__(self) -> int:
        return len(self.pieces)


@dataclass(frozen=True)
class BpeModel:
    base_alphabet: Alphabet
    merges: tuple[tuple[str, str], ...]
    target_vocab: int
    vocab: tuple[str, ...] = field(init=False, compare=False)
    _ids: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        vocab = list(dict.fromkeys(self.base_alphabet.symbols))
        seen = set(vocab)
        for left, right in self.merges:
            if left not in seen or right not in seen:
                raise ValueError(f"merge ({left!r}, {right!r}) uses an undefined piece")
            merged = left + right
            if merged not in seen:
                seen.add(merged)
                vocab.append(merged)
        object.__setattr__(self, "vocab", tuple(vocab))
        object.__setattr__(self, "_ids", {p: i for i, p in enumerate(vocab)})

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def piece_id(self, surface: str) -> int:
        return self._ids[surface]

    def surface(self, piece_id: int) -> str:
        if not 0 <= piece_id < len(self.vocab):
            raise UnknownPiece(f"piece id {piece_id} is not in the model")
        return self.vocab[piece_id]


def _text(s) -> tuple[str, str]:
    if isinstance(s, SymbolString):
        return s.symbols, s.song_id
    return s, ""


def merge_pair(pieces: list[str], left: str, right: str) -> list[str]:
    """Replace every non-overlapping ``left, right`` occurrence, scanning left to right."""
    out = []
    i, n = 0, len(pieces)
    merged = left + right
    while i < n:
        if i + 1 < n and pieces[i] == left and pieces[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(pieces[i])
            i += 1
    return out


def train_bpe(corpus: Sequence[SymbolString], target_vocab: int,
              alphabet: Alphabet | None = None) -> BpeModel:
    """Greedy BPE until the vocabulary reaches ``target_vocab`` pieces.

    Each step merges the most frequent adjacent pair (at least
    ``MIN_PAIR_COUNT`` occurrences). Ties go to the pair seen first in corpus
    order, then to the lexicographically smaller pair. Pair counts are kept
    up to date per song instead of recounting the whole corpus.
    """
    texts = [_text(s)[0] for s in corpus]
    if not texts:
        raise EmptyCorpus("cannot train BPE on an empty corpus")
    if alphabet is None:
        alphabet = Alphabet.of_symbols("".join(texts))
    base = alphabet.symbols
    if target_vocab < len(base):
        raise TargetBelowBase(f"target {target_vocab} is below the base alphabet size {len(base)}")
    for sid, t in enumerate(texts):
        for i, ch in enumerate(t):
            if ch not in alphabet:
                raise UnknownSymbol(f"symbol U+{ord(ch):04X} at index {i} is not in the alphabet",
                                    song_id=_text(corpus[sid])[1] or str(sid))

    songs = [list(t) for t in texts]
    song_pairs = [Counter(zip(s, s[1:])) for s in songs]
    counts: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = {}
    for sid, pairs in enumerate(song_pairs):
        counts.update(pairs)
        for p in pairs:
            where.setdefault(p, set()).add(sid)
    heap = [(-c, p) for p, c in counts.items()]
    heapq.heapify(heap)

    def first_occurrence(pair: tuple[str, str]) -> tuple[int, int]:
        sid = min(where[pair])
        s = songs[sid]
        for i in range(len(s) - 1):
            if s[i] == pair[0] and s[i + 1] == pair[1]:
                return sid, i
        raise AssertionError("pair index out of sync")

    vocab = set(base)
    merges: list[tuple[str, str]] = []
    while len(vocab) < target_vocab:
        # collect every live pair sharing the top count
        best_count, tied = 0, set()
        while heap:
            neg, pair = heap[0]
            if counts.get(pair, 0) != -neg:
                heapq.heappop(heap)
                continue
            if tied and -neg < best_count:
                break
            heapq.heappop(heap)
            best_count = -neg
            tied.add(pair)
        if best_count < MIN_PAIR_COUNT:
            break
        pair = min(tied, key=lambda p: (first_occurrence(p), p))
        for other in tied - {pair}:
            heapq.heappush(heap, (-best_count, other))

        merges.append(pair)
        vocab.add(pair[0] + pair[1])
        touched = set()
        for sid in sorted(where[pair]):
            old = song_pairs[sid]
            songs[sid] = merge_pair(songs[sid], *pair)
            s = songs[sid]
            new = Counter(zip(s, s[1:]))
            song_pairs[sid] = new
            for p in old.keys() | new.keys():
                diff = new.get(p, 0) - old.get(p, 0)
                if diff:
                    counts[p] += diff
                    touched.add(p)
                    if not new.get(p):
                        where[p].discard(sid)
                    else:
                        where.setdefault(p, set()).add(sid)
        for p in touched:
            if counts[p] > 0:
                heapq.heappush(heap, (-counts[p], p))
            else:
                del counts[p]
                where.pop(p, None)
    return BpeModel(alphabet, tuple(merges), target_vocab)


def bpe_encode(s: SymbolString | str, model: BpeModel) -> SubwordSequence:
    """Apply the merges in training order, each across the whole string."""
    text, song_id = _text(s)
    for i, ch in enumerate(text):
        if ch not in model.base_alphabet:
            raise UnknownSymbol(f"symbol U+{ord(ch):04X} at index {i} is not in the alphabet",
                                song_id=song_id or None)
    pieces = list(text)
    present = set(pieces)
    for left, right in model.merges:
        if left in present and right in present:
            merged = merge_pair(pieces, left, right)
            if len(merged) != len(pieces):
                pieces = merged
                present = set(pieces)
    return SubwordSequence(tuple(model.piece_id(p) for p in pieces), song_id)


def bpe_decode(seq: SubwordSequence, model: BpeModel) -> SymbolString:
    return SymbolString("".join(model.surface(p) for p in seq.pieces), seq.song_id)
