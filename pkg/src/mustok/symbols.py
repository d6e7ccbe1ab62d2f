"""Token <-> unicode symbol bijection, so a song becomes a plain string."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .errors import AlphabetOverflow, EmptyCorpus, UnknownSymbol, UnknownToken
from .tokens import MusicToken, Scheme, TokenSequence

BASE_CODEPOINT = 0x4E00
MAX_SYMBOLS = 20000


@dataclass(frozen=True)
class SymbolString:
    symbols: str
    song_id: str = ""

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True)
class Alphabet:
    entries: tuple[tuple[str, int], ...]
    scheme: Scheme = Scheme.EXTERNAL_TEXT
    _to_symbol: dict = field(init=False, repr=False, compare=False)
    _to_token: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        to_symbol = {tok: chr(cp) for tok, cp in self.entries}
        to_token = {chr(cp): tok for tok, cp in self.entries}
        if len(to_symbol) != len(self.entries) or len(to_token) != len(self.entries):
            raise ValueError("alphabet entries are not a bijection")
        object.__setattr__(self, "_to_symbol", to_symbol)
        object.__setattr__(self, "_to_token", to_token)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._to_token

    @property
    def symbols(self) -> list[str]:
        return [chr(cp) for _, cp in self.entries]

    def symbol(self, token_text: str) -> str:
        return self._to_symbol[token_text]

    def token(self, symbol: str) -> str:
        return self._to_token[symbol]

    @classmethod
    def of_symbols(cls, symbols: Iterable[str]) -> Alphabet:
        """An alphabet whose tokens are the symbols themselves (toy corpora)."""
        return cls(tuple((s, ord(s)) for s in sorted(set(symbols))))

    # -- file format: "token<TAB>U+XXXX" per line, sorted by token

    def dumps(self) -> str:
        return "".join(f"{tok}\tU+{cp:04X}\n" for tok, cp in self.entries)

    @classmethod
    def loads(cls, text: str, scheme: Scheme = Scheme.EXTERNAL_TEXT) -> Alphabet:
        entries = []
        for line in text.splitlines():
            if not line:
                continue
            tok, _, cp = line.partition("\t")
            if not cp.startswith("U+"):
                raise ValueError(f"bad alphabet line: {line!r}")
            entries.append((tok, int(cp[2:], 16)))
        return cls(tuple(entries), scheme)


def build_alphabet(corpus: Iterable[TokenSequence]) -> Alphabet:
    """Assign codepoints from U+4E00 upward to the sorted distinct token texts."""
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("cannot build an alphabet from an empty corpus")
    texts = sorted({t.text for seq in corpus for t in seq.tokens})
    if len(texts) > MAX_SYMBOLS:
        raise AlphabetOverflow(f"{len(texts)} distinct tokens exceed {MAX_SYMBOLS}")
    return Alphabet(tuple((t, BASE_CODEPOINT + i) for i, t in enumerate(texts)), corpus[0].scheme)


def encode_symbols(seq: TokenSequence, alphabet: Alphabet) -> SymbolString:
    out = []
    for i, tok in enumerate(seq.tokens):
        try:
            out.append(alphabet.symbol(tok.text))
        except KeyError:
            raise UnknownToken(f"token {tok.text!r} at index {i} is not in the alphabet",
                               song_id=seq.song_id or None) from None
    return SymbolString("".join(out), seq.song_id)


def decode_symbols(s: SymbolString, alphabet: Alphabet) -> TokenSequence:
    tokens = []
    for i, ch in enumerate(s.symbols):
        try:
            text = alphabet.token(ch)
        except KeyError:
            raise UnknownSymbol(f"symbol U+{ord(ch):04X} at index {i} is not in the alphabet",
                                song_id=s.song_id or None) from None
        tokens.append(MusicToken.parse(text, alphabet.scheme))
    return TokenSequence(alphabet.scheme, tuple(tokens), s.song_id)
