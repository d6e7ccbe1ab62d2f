"""Corpus length statistics and the representation expansion ratio."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

from .bpe import BpeModel, SubwordSequence, bpe_encode
from .errors import EmptyCorpus
from .symbols import SymbolString
from .tokens import TokenSequence
from .unigram import UnigramModel, viterbi_encode


@dataclass(frozen=True)
class CorpusStats:
    n_songs: int
    total_base_tokens: int
    total_encoded_pieces: int
    avg_base_per_song: float
    avg_pieces_per_song: float
    expansion_ratio: float  # base tokens per piece

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _base_length(item) -> int:
    if isinstance(item, SymbolString):
        return len(item.symbols)
    return len(item)


def avg_tokens_per_song(corpus: Sequence[TokenSequence | SymbolString | SubwordSequence],
                        base_lengths: Sequence[int] | None = None) -> CorpusStats:
    """Length statistics of a corpus in whatever representation it is in.

    For a subword corpus pass ``base_lengths`` (the per-song base token
    counts) to get a meaningful expansion ratio; otherwise every item is
    treated as its own base sequence and the ratio is 1.
    """
    if not corpus:
        raise EmptyCorpus("cannot compute statistics of an empty corpus")
    n = len(corpus)
    pieces = sum(len(s) for s in corpus)
    base = sum(base_lengths) if base_lengths is not None else pieces
    return CorpusStats(n, base, pieces, base / n, pieces / n, base / pieces if pieces else 1.0)


def encode_any(s: SymbolString, model: BpeModel | UnigramModel) -> SubwordSequence:
    if isinstance(model, BpeModel):
        return bpe_encode(s, model)
    return viterbi_encode(s, model)


def encoding_stats(model: BpeModel | UnigramModel, corpus: Sequence[SymbolString]) -> CorpusStats:
    if not corpus:
        raise EmptyCorpus("cannot compute statistics of an empty corpus")
    encoded = [encode_any(s, model) for s in corpus]
    return avg_tokens_per_song(encoded, [len(s.symbols) for s in corpus])


def expansion_ratio(model: BpeModel | UnigramModel, corpus: Sequence[SymbolString]) -> float:
    """Base symbols per subword piece over the whole corpus (1.0 for an identity encoding)."""
    return encoding_stats(model, corpus).expansion_ratio


def same_inference_equivalent(n_pieces: int, model: BpeModel | UnigramModel,
                              corpus: Sequence[SymbolString]) -> int:
    """How many base tokens ``n_pieces`` generated pieces amount to, rounded half up."""
    if n_pieces < 0:
        raise ValueError("n_pieces must be non-negative")
    return math.floor(n_pieces * expansion_ratio(model, corpus) + 0.5)


def stats_table(columns: dict[str, CorpusStats]) -> str:
    """Side-by-side plain-text table, one column per representation."""
    rows = [
        ("Songs", lambda s: f"{s.n_songs}"),
        ("Avg tokens per song", lambda s: f"{s.avg_pieces_per_song:.2f}"),
        ("Total tokens", lambda s: f"{s.total_encoded_pieces}"),
        ("Base tokens per piece", lambda s: f"{s.expansion_ratio:.4f}"),
    ]
    header = ["", *columns]
    body = [[label, *(fmt(s) for s in columns.values())] for label, fmt in rows]
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]

    def line(cells):
        first = cells[0].ljust(widths[0])
        return "  ".join([first, *(c.rjust(w) for c, w in zip(cells[1:], widths[1:]))]).rstrip()

    sep = "-" * (sum(widths) + 2 * (len(widths) - 1))
    return "\n".join([line(header), sep, *map(line, body)]) + "\n"
