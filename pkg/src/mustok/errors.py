"""Exception hierarchy.

Every error raised on bad input data derives from :class:`DataError`; the CLI
maps those to exit code 2.
"""

from __future__ import annotations


class DataError(Exception):
    """Base class for errors caused by the content of an input."""

    def __init__(self, message: str, *, song_id: str | None = None,
                 offset: int | None = None) -> None:
        self.song_id = song_id
        self.offset = offset
        where = []
        if song_id is not None:
            where.append(f"song {song_id}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


# -- MIDI files
class MidiError(DataError):
    pass


class MalformedHeader(MidiError):
    pass


class UnsupportedFormat(MidiError):
    pass


class TruncatedChunk(MidiError):
    pass


# -- musical tokens
class UnquantizedInput(DataError):
    pass


class MalformedSequence(DataError):
    pass


class EmptyCorpus(DataError):
    pass


# -- symbols and subwords
class AlphabetOverflow(DataError):
    pass


class UnknownToken(DataError):
    pass


class UnknownSymbol(DataError):
    pass


class UnknownPiece(DataError):
    pass


class TargetBelowBase(DataError):
    pass


class NumericalUnderflow(DataError):
    pass


# -- metrics
class NoPitchedNotes(DataError):
    pass


class BarOutOfRange(DataError):
    pass


class TooFewBars(DataError):
    pass


class EmptyScore(DataError):
    pass


class DegenerateMatrix(DataError):
    pass


class InvalidBand(DataError):
    pass
