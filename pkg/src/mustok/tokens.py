"""Musical tokenization: REMI, MIDI-like and pre-tokenized text corpora.

REMI works on a quantized score (see :func:`quantize`) and is lossless on it.
MIDI-like works in milliseconds on a 10 ms grid and is lossless up to half a
grid step.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from collections import defaultdict, deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from .errors import EmptyCorpus, MalformedSequence, UnquantizedInput
from .smf import NoteEvent, Score, TempoChange, TimeSignature, ticks_to_seconds

# detokenized MIDI-like scores: 120 BPM at 500 ticks per quarter, one tick per ms
MIDILIKE_DIVISION = 500


class TokenKind(str, Enum):
    BAR = "Bar"
    POSITION = "Position"
    PITCH = "Pitch"
    VELOCITY = "Velocity"
    DURATION = "Duration"
    TIME_SHIFT = "TimeShift"
    NOTE_ON = "NoteOn"
    NOTE_OFF = "NoteOff"
    TEMPO = "Tempo"
    EXTERNAL = "External"


class Scheme(str, Enum):
    REMI = "remi"
    MIDI_LIKE = "midilike"
    EXTERNAL_TEXT = "text"


_KINDS = {k.value: k for k in TokenKind if k is not TokenKind.EXTERNAL}


@dataclass(frozen=True)
class MusicToken:
    kind: TokenKind
    value: int = 0
    raw: str = ""  # only for External tokens

    @property
    def text(self) -> str:
        if self.kind is TokenKind.EXTERNAL:
            return self.raw
        if self.kind is TokenKind.BAR:
            return "Bar"
        return f"{self.kind.value}_{self.value}"

    @classmethod
    def external(cls, text: str) -> MusicToken:
        if not text or any(c.isspace() for c in text):
            raise ValueError(f"external token must be non-empty and whitespace-free: {text!r}")
        return cls(TokenKind.EXTERNAL, 0, text)

    @classmethod
    def parse(cls, text: str, scheme: Scheme = Scheme.REMI) -> MusicToken:
        """Inverse of :attr:`text` for the given scheme."""
        if scheme is Scheme.EXTERNAL_TEXT:
            return cls.external(text)
        if text == "Bar":
            return cls(TokenKind.BAR)
        name, sep, value = text.rpartition("_")
        kind = _KINDS.get(name)
        if not sep or kind is None or kind is TokenKind.BAR:
            raise MalformedSequence(f"unrecognised token {text!r}")
        try:
            number = int(value)
        except ValueError:
            raise MalformedSequence(f"unrecognised token {text!r}") from None
        if str(number) != value:
            raise MalformedSequence(f"non-canonical token {text!r}")
        return cls(kind, number)

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class TokenSequence:
    scheme: Scheme
    tokens: tuple[MusicToken, ...] = ()
    song_id: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def texts(self) -> list[str]:
        return [t.text for t in self.tokens]

    def to_line(self) -> str:
        return " ".join(self.texts)


@dataclass(frozen=True)
class TokenizerConfig:
    """Bin settings shared by the tokenizers.

    ``duration_bins`` are in thirty-second notes; ``timeshift_ms_bins`` in
    milliseconds; ``tempo_bins`` in BPM (``None`` disables REMI tempo tokens).
    """

    positions_per_bar: int = 16
    velocity_bins: int = 32
    duration_bins: tuple[int, ...] = tuple(range(1, 65))
    timeshift_ms_bins: tuple[int, ...] = tuple(range(10, 1001, 10))
    tempo_bins: tuple[int, ...] | None = None
    division: int = 480
    _duration_ticks: tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        lists = [self.duration_bins, self.timeshift_ms_bins]
        if self.tempo_bins is not None:
            lists.append(self.tempo_bins)
        for bins in lists:
            if not bins or any(b <= 0 for b in bins) or any(a >= b for a, b in zip(bins, bins[1:])):
                raise ValueError(f"bins must be non-empty, positive and strictly increasing: {bins}")
        if not 1 <= self.velocity_bins <= 127:
            raise ValueError("velocity_bins must lie in [1, 127]")
        if self.division % 8 or (self.division * 4) % self.positions_per_bar:
            raise ValueError("division must be a multiple of 8 and split evenly into positions")
        step = self.timeshift_ms_bins[0]
        if any(b % step for b in self.timeshift_ms_bins):
            raise ValueError("time-shift bins must be multiples of the smallest bin")
        object.__setattr__(self, "duration_bins", tuple(self.duration_bins))
        object.__setattr__(self, "timeshift_ms_bins", tuple(self.timeshift_ms_bins))
        if self.tempo_bins is not None:
            object.__setattr__(self, "tempo_bins", tuple(self.tempo_bins))
        object.__setattr__(self, "_duration_ticks",
                           tuple(b * self.division // 8 for b in self.duration_bins))

    @property
    def grid(self) -> int:
        """Ticks between two REMI positions."""
        return self.division * 4 // self.positions_per_bar

    @property
    def bar_ticks(self) -> int:
        return self.division * 4

    def velocity_bin(self, velocity: int) -> int:
        b = math.ceil(velocity * self.velocity_bins / 127)
        return min(max(b, 1), self.velocity_bins)

    def velocity_value(self, bin_index: int) -> int:
        return _round_half_up((bin_index - 0.5) * 127 / self.velocity_bins)

    def duration_ticks(self, multiple: int) -> int:
        return multiple * self.division // 8


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def _snap_int(x: int, step: int) -> int:
    """Nearest multiple of ``step``; ties go up."""
    return (2 * x + step) // (2 * step) * step


def _nearest(values: Sequence[int], x: float) -> int:
    """Index of the value closest to ``x`` in a sorted list; ties go up."""
    i = bisect_left(values, x)
    if i == 0:
        return 0
    if i == len(values):
        return len(values) - 1
    return i if values[i] - x <= x - values[i - 1] else i - 1


def _rescale(tick: int, src: int, dst: int) -> int:
    return (2 * tick * dst + src) // (2 * src)


def quantize(score: Score, cfg: TokenizerConfig = TokenizerConfig()) -> Score:
    """Snap a score onto the REMI grid at ``cfg.division`` ticks per quarter.

    Onsets go to the nearest position, durations to the nearest duration bin
    and velocities to their bin centre. Idempotent.
    """
    src, grid = score.division, cfg.grid
    durations = cfg._duration_ticks
    notes = []
    for n in score.notes:
        onset = _snap_int(_rescale(n.onset_tick, src, cfg.division), grid)
        duration = durations[_nearest(durations, _rescale(n.duration_tick, src, cfg.division))]
        velocity = cfg.velocity_value(cfg.velocity_bin(n.velocity))
        notes.append(NoteEvent(n.pitch, velocity, onset, duration, n.channel, n.track))
    tempos = []
    for t in score.tempo_map:
        tick = _rescale(t.tick, src, cfg.division)
        us = t.microseconds_per_quarter
        if cfg.tempo_bins is not None:
            tick = _snap_int(tick, grid)
            bpm = cfg.tempo_bins[_nearest(cfg.tempo_bins, 60e6 / us)]
            us = _round_half_up(60e6 / bpm)
        tempos.append(TempoChange(tick, us))
    signatures = [TimeSignature(_rescale(s.tick, src, cfg.division), s.numerator, s.denominator)
                  for s in score.time_signatures]
    return Score(cfg.division, tuple(notes), tuple(tempos), tuple(signatures))


# -- REMI


def _tempo_bpm(cfg: TokenizerConfig, us: int) -> int:
    return cfg.tempo_bins[_nearest(cfg.tempo_bins, 60e6 / us)]


def tokenize_remi(score: Score, cfg: TokenizerConfig = TokenizerConfig(),
                  song_id: str = "") -> TokenSequence:
    """Bar / Position / Pitch / Velocity / Duration tokens for a quantized score."""
    where = song_id or None
    if score.division != cfg.division:
        raise UnquantizedInput(f"score division {score.division} != {cfg.division}", song_id=where)
    grid, bar = cfg.grid, cfg.bar_ticks
    duration_values = dict(zip(cfg._duration_ticks, cfg.duration_bins))
    by_tick: dict[int, list[NoteEvent]] = defaultdict(list)
    for i, n in enumerate(score.notes):
        if n.onset_tick % grid:
            raise UnquantizedInput(f"note {i} onset {n.onset_tick} is off the grid", song_id=where)
        if n.duration_tick not in duration_values:
            raise UnquantizedInput(f"note {i} duration {n.duration_tick} is not a bin", song_id=where)
        if cfg.velocity_value(cfg.velocity_bin(n.velocity)) != n.velocity:
            raise UnquantizedInput(f"note {i} velocity {n.velocity} is not a bin centre", song_id=where)
        by_tick[n.onset_tick].append(n)
    tempo_at: dict[int, int] = {}
    if cfg.tempo_bins is not None:
        for t in score.tempo_map:
            if t.tick % grid:
                raise UnquantizedInput(f"tempo change at {t.tick} is off the grid", song_id=where)
            tempo_at[t.tick] = _tempo_bpm(cfg, t.microseconds_per_quarter)
    ticks = sorted(set(by_tick) | set(tempo_at))
    if not ticks:
        return TokenSequence(Scheme.REMI, (), song_id)

    out: list[MusicToken] = []
    current_bar = -1
    for tick in ticks:
        while current_bar < tick // bar:
            out.append(MusicToken(TokenKind.BAR))
            current_bar += 1
        out.append(MusicToken(TokenKind.POSITION, (tick % bar) // grid + 1))
        if tick in tempo_at:
            out.append(MusicToken(TokenKind.TEMPO, tempo_at[tick]))
        for n in sorted(by_tick.get(tick, ()), key=lambda n: (n.pitch, n.velocity, n.duration_tick)):
            out += [MusicToken(TokenKind.PITCH, n.pitch),
                    MusicToken(TokenKind.VELOCITY, cfg.velocity_bin(n.velocity)),
                    MusicToken(TokenKind.DURATION, duration_values[n.duration_tick])]
    return TokenSequence(Scheme.REMI, tuple(out), song_id)


def _as_tokens(seq, scheme: Scheme) -> tuple[Sequence[MusicToken], str]:
    if isinstance(seq, TokenSequence):
        if seq.scheme is not scheme:
            raise MalformedSequence(f"expected a {scheme.value} sequence, got {seq.scheme.value}",
                                    song_id=seq.song_id or None)
        return seq.tokens, seq.song_id
    return [t if isinstance(t, MusicToken) else MusicToken.parse(t, scheme) for t in seq], ""


def detokenize_remi(seq: TokenSequence, cfg: TokenizerConfig = TokenizerConfig(),
                    recover: bool = False) -> Score:
    """Rebuild a score from REMI tokens.

    With ``recover`` set, a note whose tokens are out of order or incomplete
    is dropped and decoding continues; otherwise :class:`MalformedSequence`.
    """
    tokens, song_id = _as_tokens(seq, Scheme.REMI)
    grid, bar_len = cfg.grid, cfg.bar_ticks
    notes: list[NoteEvent] = []
    tempos: list[TempoChange] = []
    bar = -1
    position: int | None = None
    pending: list[int] = []

    def fail(i: int, why: str) -> None:
        if not recover:
            raise MalformedSequence(f"token {i} ({tokens[i].text}): {why}",
                                    song_id=song_id or None)
        pending.clear()

    for i, tok in enumerate(tokens):
        kind = tok.kind
        if pending and kind not in (TokenKind.VELOCITY, TokenKind.DURATION):
            fail(i, "previous note is incomplete")
        if kind is TokenKind.BAR:
            bar += 1
            position = None
        elif kind is TokenKind.POSITION:
            if bar < 0 or not 1 <= tok.value <= cfg.positions_per_bar:
                fail(i, "position outside a bar or out of range")
                continue
            position = bar * bar_len + (tok.value - 1) * grid
        elif kind is TokenKind.TEMPO:
            if position is None or cfg.tempo_bins is None or tok.value not in cfg.tempo_bins:
                fail(i, "unexpected tempo")
                continue
            tempos.append(TempoChange(position, _round_half_up(60e6 / tok.value)))
        elif kind is TokenKind.PITCH:
            if position is None or not 0 <= tok.value <= 127:
                fail(i, "pitch without a preceding position")
                continue
            pending[:] = [tok.value]
        elif kind is TokenKind.VELOCITY:
            if len(pending) != 1 or not 1 <= tok.value <= cfg.velocity_bins:
                fail(i, "velocity out of order")
                continue
            pending.append(cfg.velocity_value(tok.value))
        elif kind is TokenKind.DURATION:
            if len(pending) != 2 or tok.value not in cfg.duration_bins:
                fail(i, "duration out of order")
                continue
            notes.append(NoteEvent(pending[0], pending[1], position, cfg.duration_ticks(tok.value)))
            pending.clear()
        else:
            fail(i, "token kind not used by REMI")
    if pending:
        fail(len(tokens) - 1, "sequence ends inside a note")
    return Score(cfg.division, tuple(notes), tuple(tempos))


# -- MIDI-like


def tokenize_midilike(score: Score, cfg: TokenizerConfig = TokenizerConfig(),
                      song_id: str = "") -> TokenSequence:
    """NoteOn / NoteOff / Velocity / TimeShift event stream on a 10 ms grid."""
    step = cfg.timeshift_ms_bins[0]
    shifts = cfg.timeshift_ms_bins

    def ms(tick: int) -> int:
        return _round_half_up(ticks_to_seconds(score, tick) * 1000 / step) * step

    events = []
    for n in score.notes:
        on = ms(n.onset_tick)
        off = max(ms(n.offset_tick), on + step)
        events.append((off, 0, n.pitch, 0))
        events.append((on, 1, n.pitch, cfg.velocity_bin(n.velocity)))
    events.sort()

    out: list[MusicToken] = []
    cursor = 0
    velocity = None
    for time, is_on, pitch, vbin in events:
        gap = time - cursor
        while gap > 0:
            shift = shifts[bisect_left(shifts, gap + 1) - 1]
            out.append(MusicToken(TokenKind.TIME_SHIFT, shift))
            gap -= shift
        cursor = time
        if is_on:
            if vbin != velocity:
                out.append(MusicToken(TokenKind.VELOCITY, vbin))
                velocity = vbin
            out.append(MusicToken(TokenKind.NOTE_ON, pitch))
        else:
            out.append(MusicToken(TokenKind.NOTE_OFF, pitch))
    return TokenSequence(Scheme.MIDI_LIKE, tuple(out), song_id)


def detokenize_midilike(seq: TokenSequence, cfg: TokenizerConfig = TokenizerConfig(),
                        recover: bool = False) -> Score:
    """Rebuild a score (one tick per millisecond) from MIDI-like tokens.

    Notes still sounding at the end of the stream end at the final time.
    """
    tokens, song_id = _as_tokens(seq, Scheme.MIDI_LIKE)
    cursor = 0
    velocity = cfg.velocity_value(cfg.velocity_bin(64))
    sounding: dict[int, deque] = defaultdict(deque)
    notes: list[NoteEvent] = []
    shifts = set(cfg.timeshift_ms_bins)
    for i, tok in enumerate(tokens):
        kind = tok.kind
        bad = None
        if kind is TokenKind.TIME_SHIFT:
            if tok.value in shifts:
                cursor += tok.value
            else:
                bad = "unknown time shift"
        elif kind is TokenKind.VELOCITY:
            if 1 <= tok.value <= cfg.velocity_bins:
                velocity = cfg.velocity_value(tok.value)
            else:
                bad = "velocity out of range"
        elif kind is TokenKind.NOTE_ON and 0 <= tok.value <= 127:
            sounding[tok.value].append((cursor, velocity))
        elif kind is TokenKind.NOTE_OFF and 0 <= tok.value <= 127:
            if sounding[tok.value]:
                onset, vel = sounding[tok.value].popleft()
                notes.append(NoteEvent(tok.value, vel, onset, max(cursor - onset, 1)))
            else:
                bad = "note-off without a sounding note"
        else:
            bad = "token kind not used by MIDI-like"
        if bad and not recover:
            raise MalformedSequence(f"token {i} ({tok.text}): {bad}", song_id=song_id or None)
    for pitch in sorted(sounding):
        for onset, vel in sounding[pitch]:
            notes.append(NoteEvent(pitch, vel, onset, max(cursor - onset, 1)))
    return Score(MIDILIKE_DIVISION, tuple(notes))


# -- token text corpora


def song_ids(n: int) -> list[str]:
    return [f"{i + 1:06d}" for i in range(n)]


def read_token_text(text: str, scheme: Scheme = Scheme.EXTERNAL_TEXT) -> list[TokenSequence]:
    """One song per line, tokens separated by any run of whitespace.

    Blank lines are kept as empty songs so line numbers stay aligned with
    song ids; a corpus made only of blank lines is rejected.
    """
    lines = text.splitlines()
    if not any(line.strip() for line in lines):
        raise EmptyCorpus("token corpus has no non-blank lines")
    out = []
    for sid, line in zip(song_ids(len(lines)), lines):
        try:
            tokens = tuple(MusicToken.parse(t, scheme) for t in line.split())
        except MalformedSequence as exc:
            raise MalformedSequence(str(exc), song_id=sid) from None
        out.append(TokenSequence(scheme, tokens, sid))
    return out


def write_token_text(corpus: Iterable[TokenSequence]) -> str:
    return "".join(seq.to_line() + "\n" for seq in corpus)
