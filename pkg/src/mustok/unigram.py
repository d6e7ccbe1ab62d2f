"""Unigram language-model segmentation: seeding, EM, pruning and Viterbi.

Forward-backward runs in log space and is vectorised across songs: every
song is laid out as a row of a ``(songs, positions, piece length)`` lattice
of substring ids, so one numpy step advances all songs by one symbol.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bpe import SubwordSequence
from .errors import EmptyCorpus, NumericalUnderflow, TargetBelowBase, UnknownPiece, UnknownSymbol
from .symbols import Alphabet, SymbolString

# smallest share of the probability mass a base symbol can end up with
UNUSED_SYMBOL_MASS = 1e-12


@dataclass(frozen=True)
class UnigramConfig:
    max_piece_len: int = 8
    seed_size: int | None = None  # defaults to 8 x target_vocab
    em_iters_per_round: int = 2
    shrink_factor: float = 0.75


@dataclass(frozen=True)
class UnigramModel:
    pieces: tuple[tuple[str, float], ...]
    base_alphabet: Alphabet
    target_vocab: int = 0
    config: UnigramConfig = UnigramConfig()
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index = {surface: i for i, (surface, _) in enumerate(self.pieces)}
        if len(index) != len(self.pieces):
            raise ValueError("piece surfaces must be unique")
        missing = [s for s in self.base_alphabet.symbols if s not in index]
        if missing:
            raise ValueError(f"base symbols missing from the pieces: {missing[:5]}")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def max_len(self) -> int:
        return max(len(s) for s, _ in self.pieces)

    def log_prob(self, surface: str) -> float | None:
        i = self._index.get(surface)
        return None if i is None else self.pieces[i][1]

    def piece_id(self, surface: str) -> int:
        return self._index[surface]

    def surface(self, piece_id: int) -> str:
        if not 0 <= piece_id < len(self.pieces):
            raise UnknownPiece(f"piece id {piece_id} is not in the model")
        return self.pieces[piece_id][0]

    def total_probability(self) -> float:
        return math.fsum(math.exp(lp) for _, lp in self.pieces)


def _text(s) -> str:
    return s.symbols if isinstance(s, SymbolString) else s


def _normalized(weights: dict[str, float]) -> list[tuple[str, float]]:
    # subtract logs so a subnormal weight cannot underflow to zero first
    log_total = math.log(math.fsum(weights.values()))
    return [(s, math.log(w) - log_total) for s, w in weights.items()]


def _check_symbols(texts: list[str], alphabet: Alphabet) -> None:
    for sid, t in enumerate(texts):
        for i, ch in enumerate(t):
            if ch not in alphabet:
                raise UnknownSymbol(f"symbol U+{ord(ch):04X} at index {i} is not in the alphabet",
                                    song_id=str(sid))


# -- lattice


class _Lattice:
    """Substring ids for every (song, end position, length) cell of a corpus."""

    def __init__(self, texts: list[str], max_len: int) -> None:
        self.texts = texts
        self.lengths = np.array([len(t) for t in texts], dtype=np.int64)
        self.max_len = max_len
        width = int(self.lengths.max(initial=0))
        self.ids = np.full((len(texts), width, max_len), -1, dtype=np.int64)
        table: dict[str, int] = {}
        for s, t in enumerate(texts):
            for j in range(len(t)):
                for k in range(1, min(max_len, j + 1) + 1):
                    sub = t[j + 1 - k:j + 1]
                    self.ids[s, j, k - 1] = table.setdefault(sub, len(table))
        self.surfaces = list(table)

    def piece_log_probs(self, model: UnigramModel) -> np.ndarray:
        """log p of each cell; -inf where the substring is not a piece."""
        lp = np.array([model.log_prob(s) if model.log_prob(s) is not None else -np.inf
                       for s in self.surfaces] + [-np.inf])
        return lp[self.ids]  # id -1 picks the trailing -inf

    def forward_backward(self, model: UnigramModel) -> tuple[np.ndarray, np.ndarray]:
        """Per-song log-likelihoods and expected counts per substring id."""
        L = self.piece_log_probs(model)
        n_songs, width, K = self.ids.shape
        alpha = np.full((n_songs, width + 1), -np.inf)
        alpha[:, 0] = 0.0
        for j in range(1, width + 1):
            k = min(K, j)
            # piece of length m+1 ends at j-1 and starts at j-1-m
            terms = alpha[:, j - 1 - np.arange(k)] + L[:, j - 1, :k]
            alpha[:, j] = _logsumexp(terms)
        beta = np.full((n_songs, width + 1), -np.inf)
        beta[np.arange(n_songs), self.lengths] = 0.0
        for j in range(width - 1, -1, -1):
            k = min(K, width - j)
            ends = j + np.arange(k)  # cell index j+m holds the piece s[j:j+m+1]
            terms = L[:, ends, np.arange(k)] + beta[:, ends + 1]
            beta[:, j] = np.where(self.lengths == j, 0.0, _logsumexp(terms))
        log_z = alpha[np.arange(n_songs), self.lengths]
        if np.any(np.isneginf(log_z)):
            bad = int(np.flatnonzero(np.isneginf(log_z))[0])
            raise NumericalUnderflow("a song has no segmentation", song_id=str(bad))

        counts = np.zeros(len(self.surfaces))
        for m in range(K):
            # cells (s, j, m): piece spans [j-m, j]
            j = np.arange(m, width)
            if not len(j):
                continue
            post = alpha[:, j - m] + L[:, j, m] + beta[:, j + 1] - log_z[:, None]
            ids = self.ids[:, j, m]
            ok = (ids >= 0) & np.isfinite(post)
            counts += np.bincount(ids[ok], weights=np.exp(post[ok]), minlength=len(self.surfaces))
        return log_z, counts


def _logsumexp(terms: np.ndarray) -> np.ndarray:
    top = terms.max(axis=1)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(terms - safe[:, None]).sum(axis=1)) + safe


# -- operations


def seed_vocabulary(corpus: Sequence, max_piece_len: int, seed_size: int,
                    alphabet: Alphabet | None = None) -> UnigramModel:
    """Frequent substrings as the initial, oversized vocabulary.

    Substrings of up to ``max_piece_len`` symbols seen at least twice are
    ranked by count x length and cut at ``seed_size``; every base symbol is
    then added back regardless of the cut.
    """
    texts = [_text(s) for s in corpus]
    if not texts or not any(texts):
        raise EmptyCorpus("cannot seed a vocabulary from an empty corpus")
    if max_piece_len < 1:
        raise ValueError("max_piece_len must be at least 1")
    if alphabet is None:
        alphabet = Alphabet.of_symbols("".join(texts))
    _check_symbols(texts, alphabet)
    counts: Counter = Counter()
    for t in texts:
        for i in range(len(t)):
            for k in range(1, min(max_piece_len, len(t) - i) + 1):
                counts[t[i:i + k]] += 1
    ranked = sorted((s for s, c in counts.items() if c >= 2),
                    key=lambda s: (-counts[s] * len(s), s))[:seed_size]
    weights = {s: float(counts[s]) for s in ranked}
    for s in alphabet.symbols:
        weights.setdefault(s, float(max(counts[s], 1)))
    return UnigramModel(tuple(_normalized(weights)), alphabet, config=UnigramConfig(max_piece_len))


def corpus_log_likelihood(corpus: Sequence, model: UnigramModel) -> float:
    lattice = _Lattice([_text(s) for s in corpus], model.max_len)
    log_z, _ = lattice.forward_backward(model)
    return math.fsum(log_z)


def em_step(corpus: Sequence, model: UnigramModel, *, _lattice: _Lattice | None = None) -> UnigramModel:
    """One EM iteration: expected piece counts, then relative frequencies.

    Multi-symbol pieces with zero expected count are removed. Base symbols
    never drop below a negligible share of the mass, so any string over the
    alphabet can still be segmented.
    """
    lattice = _lattice or _Lattice([_text(s) for s in corpus], model.max_len)
    _, sub_counts = lattice.forward_backward(model)
    by_surface = dict(zip(lattice.surfaces, sub_counts))
    base = set(model.base_alphabet.symbols)
    weights = {}
    for surface, _ in model.pieces:
        c = float(by_surface.get(surface, 0.0))
        if c > 0 or surface in base:
            weights[surface] = c
    total = math.fsum(weights.values())
    if total <= 0:
        raise NumericalUnderflow("corpus has no symbols to estimate from")
    floor = total * UNUSED_SYMBOL_MASS
    for s in base:
        weights[s] = max(weights.get(s, 0.0), floor)
    return UnigramModel(tuple(_normalized(weights)), model.base_alphabet,
                        model.target_vocab, model.config)


def _viterbi(text: str, log_probs: dict[str, float], max_len: int,
             exclude: str | None = None) -> tuple[float, list[str]] | None:
    """Best segmentation of ``text``; ``None`` when none exists.

    Ties prefer fewer pieces, then a longer first piece (and so on
    left to right), which the suffix recursion gives for free.
    """
    n = len(text)
    # best[i] = (score, -pieces, first piece length) for text[i:]
    best: list[tuple[float, int, int] | None] = [None] * (n + 1)
    best[n] = (0.0, 0, 0)
    for i in range(n - 1, -1, -1):
        top = None
        for k in range(min(max_len, n - i), 0, -1):
            rest = best[i + k]
            if rest is None:
                continue
            piece = text[i:i + k]
            lp = log_probs.get(piece)
            if lp is None or piece == exclude:
                continue
            key = (lp + rest[0], rest[1] - 1, k)
            if top is None or key > top:
                top = key
        best[i] = top
    if best[0] is None:
        return None
    pieces, i = [], 0
    while i < n:
        k = best[i][2]
        pieces.append(text[i:i + k])
        i += k
    return best[0][0], pieces


def prune_vocabulary(corpus: Sequence, model: UnigramModel, shrink_factor: float,
                     min_size: int = 0, max_size: int | None = None) -> UnigramModel:
    """Keep the ``ceil(shrink_factor * |pieces|)`` pieces whose loss would hurt most.

    The loss of dropping a piece is estimated from the Viterbi segmentation:
    its occurrences are re-spelled with the best segmentation of its own
    surface that avoids it, with frequencies re-estimated accordingly.
    Base symbols are never dropped. ``max_size`` caps the number kept and
    ``min_size`` is a floor that wins over both.
    """
    if not 0 < shrink_factor < 1:
        raise ValueError("shrink_factor must lie in (0, 1)")
    n_keep = math.ceil(shrink_factor * len(model))
    if max_size is not None:
        n_keep = min(n_keep, max_size)
    n_keep = max(n_keep, min_size)
    base = set(model.base_alphabet.symbols)
    multi = [s for s, _ in model.pieces if s not in base]
    n_multi_keep = max(n_keep - (len(model) - len(multi)), 0)
    if n_multi_keep >= len(multi):
        return model

    lp = dict(model.pieces)
    max_len = model.max_len
    freq: Counter = Counter()
    for t in (_text(s) for s in corpus):
        result = _viterbi(t, lp, max_len)
        if result is None:
            raise NumericalUnderflow("a song has no segmentation")
        freq.update(result[1])
    total = sum(freq.values())

    loss = {}
    for s in multi:
        f = freq.get(s, 0)
        if f == 0:
            loss[s] = 0.0
            continue
        alternative = _viterbi(s, lp, max_len, exclude=s)[1]
        total_alt = total + f * (len(alternative) - 1)
        keep_lp = math.log(f) - math.log(total)
        alt_lp = math.fsum(math.log(freq.get(a, 0) + f) - math.log(total_alt) for a in alternative)
        loss[s] = f / total * (keep_lp - alt_lp)
    kept = set(sorted(multi, key=lambda s: (-loss[s], s))[:n_multi_keep])
    survivors = [(s, p) for s, p in model.pieces if s in base or s in kept]
    top = max(p for _, p in survivors)
    log_total = top + math.log(math.fsum(math.exp(p - top) for _, p in survivors))
    return UnigramModel(tuple((s, p - log_total) for s, p in survivors), model.base_alphabet,
                        model.target_vocab, model.config)


def train_unigram(corpus: Sequence, target_vocab: int, config: UnigramConfig = UnigramConfig(),
                  alphabet: Alphabet | None = None,
                  trace: list | None = None) -> UnigramModel:
    """Seed, then alternate EM and pruning until at most ``target_vocab`` pieces remain.

    If ``trace`` is given, ``(stage, n_pieces, log_likelihood)`` tuples are
    appended to it after every EM iteration and every pruning step.
    """
    texts = [_text(s) for s in corpus]
    if alphabet is None:
        alphabet = Alphabet.of_symbols("".join(texts))
    if target_vocab < len(alphabet):
        raise TargetBelowBase(f"target {target_vocab} is below the base alphabet size {len(alphabet)}")
    seed_size = config.seed_size if config.seed_size is not None else 8 * target_vocab
    model = seed_vocabulary(texts, config.max_piece_len, seed_size, alphabet)
    model = UnigramModel(model.pieces, alphabet, target_vocab, config)
    lattice = _Lattice(texts, config.max_piece_len)

    def run_em():
        nonlocal model
        for _ in range(config.em_iters_per_round):
            model = em_step(texts, model, _lattice=lattice)
            if trace is not None:
                trace.append(("em", len(model), corpus_log_likelihood(texts, model)))

    while len(model) > target_vocab:
        run_em()
        if len(model) <= target_vocab:
            break
        size = len(model)
        # always drop at least one piece, even when the shrink factor rounds up to everything
        model = prune_vocabulary(texts, model, config.shrink_factor,
                                 min_size=target_vocab, max_size=size - 1)
        if trace is not None:
            trace.append(("prune", len(model), corpus_log_likelihood(texts, model)))
        if len(model) == size:
            break
    run_em()
    return model


def viterbi_encode(s: SymbolString | str, model: UnigramModel) -> SubwordSequence:
    text = _text(s)
    song_id = s.song_id if isinstance(s, SymbolString) else ""
    for i, ch in enumerate(text):
        if ch not in model.base_alphabet:
            raise UnknownSymbol(f"symbol U+{ord(ch):04X} at index {i} is not in the alphabet",
                                song_id=song_id or None)
    _, pieces = _viterbi(text, dict(model.pieces), model.max_len)
    return SubwordSequence(tuple(model.piece_id(p) for p in pieces), song_id)


def segmentation_log_prob(seq: SubwordSequence, model: UnigramModel) -> float:
    return sum(model.pieces[p][1] for p in seq.pieces)


def unigram_decode(seq: SubwordSequence, model: UnigramModel) -> SymbolString:
    return SymbolString("".join(model.surface(p) for p in seq.pieces), seq.song_id)
