"""Standard MIDI File (format 0/1) reading and writing.

Only the parts of the format needed for note-level work are interpreted:
note on/off, tempo and time-signature meta events. Everything else is
skipped on read and never written.
"""

from __future__ import annotations

import struct
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path

from .errors import MalformedHeader, TruncatedChunk, UnsupportedFormat

DEFAULT_TEMPO = 500_000  # µs per quarter note, i.e. 120 BPM
PERCUSSION_CHANNEL = 9


@dataclass(frozen=True)
class NoteEvent:
    pitch: int
    velocity: int
    onset_tick: int
    duration_tick: int
    channel: int = 0
    track: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity out of range: {self.velocity}")
        if self.onset_tick < 0 or self.duration_tick < 1:
            raise ValueError(f"bad timing: onset={self.onset_tick} duration={self.duration_tick}")
        if not 0 <= self.channel <= 15 or self.track < 0:
            raise ValueError(f"bad channel/track: {self.channel}/{self.track}")

    @property
    def offset_tick(self) -> int:
        return self.onset_tick + self.duration_tick

    def sort_key(self) -> tuple[int, ...]:
        return (self.onset_tick, self.pitch, self.channel, self.track,
                self.duration_tick, self.velocity)


@dataclass(frozen=True, order=True)
class TempoChange:
    tick: int
    microseconds_per_quarter: int


@dataclass(frozen=True, order=True)
class TimeSignature:
    tick: int
    numerator: int
    denominator: int


@dataclass(frozen=True)
class Score:
    """A parsed piece: notes on a tick grid plus the maps needed to read it.

    The constructor sorts notes by ``(onset, pitch)`` and the maps by tick, so
    two scores holding the same events always compare equal.
    """

    division: int
    notes: tuple[NoteEvent, ...] = ()
    tempo_map: tuple[TempoChange, ...] = ()
    time_signatures: tuple[TimeSignature, ...] = ()

    def __post_init__(self) -> None:
        if self.division <= 0:
            raise ValueError("division must be positive")
        object.__setattr__(self, "notes", tuple(sorted(self.notes, key=NoteEvent.sort_key)))
        object.__setattr__(self, "tempo_map", tuple(sorted(self.tempo_map, key=lambda t: t.tick)))
        object.__setattr__(self, "time_signatures",
                           tuple(sorted(self.time_signatures, key=lambda t: t.tick)))

    @property
    def end_tick(self) -> int:
        return max((n.offset_tick for n in self.notes), default=0)

    def replace_notes(self, notes) -> Score:
        return Score(self.division, tuple(notes), self.tempo_map, self.time_signatures)


def ticks_to_seconds(score: Score, tick: int) -> float:
    """Convert an absolute tick position to seconds through the tempo map."""
    if tick < 0:
        raise ValueError("tick must be non-negative")
    seconds = 0.0
    last_tick = 0
    tempo = DEFAULT_TEMPO
    for change in score.tempo_map:
        if change.tick >= tick:
            break
        seconds += (change.tick - last_tick) * tempo / (score.division * 1e6)
        last_tick = change.tick
        tempo = change.microseconds_per_quarter
    return seconds + (tick - last_tick) * tempo / (score.division * 1e6)


# -- reading


def _read_vlq(data: bytes, pos: int, end: int) -> tuple[int, int]:
    value = 0
    for _ in range(4):
        if pos >= end:
            raise TruncatedChunk("variable-length quantity runs past chunk end", offset=pos)
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise TruncatedChunk("variable-length quantity longer than 4 bytes", offset=pos)


_DATA_LENGTHS = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def _parse_track(data: bytes, start: int, end: int, track: int, notes: list,
                 tempos: list, signatures: list) -> None:
    pos = start
    tick = 0
    status = None
    # (channel, pitch) -> FIFO of (onset, velocity)
    open_notes: dict[tuple[int, int], deque] = defaultdict(deque)

    def close(key, at):
        onset, velocity = open_notes[key].popleft()
        notes.append(NoteEvent(key[1], velocity, onset, max(at - onset, 1), key[0], track))

    while pos < end:
        delta, pos = _read_vlq(data, pos, end)
        tick += delta
        if pos >= end:
            raise TruncatedChunk("event missing after delta time", offset=pos)
        byte = data[pos]
        if byte == 0xFF:
            if pos + 2 > end:
                raise TruncatedChunk("truncated meta event", offset=pos)
            kind = data[pos + 1]
            length, pos = _read_vlq(data, pos + 2, end)
            if pos + length > end:
                raise TruncatedChunk("meta event runs past chunk end", offset=pos)
            payload = data[pos:pos + length]
            pos += length
            if kind == 0x51 and length == 3:
                tempos.append(TempoChange(tick, int.from_bytes(payload, "big")))
            elif kind == 0x58 and length >= 2:
                signatures.append(TimeSignature(tick, payload[0], 2 ** payload[1]))
            elif kind == 0x2F:
                break
            continue
        if byte in (0xF0, 0xF7):
            length, pos = _read_vlq(data, pos + 1, end)
            if pos + length > end:
                raise TruncatedChunk("sysex event runs past chunk end", offset=pos)
            pos += length
            continue
        if byte & 0x80:
            status = byte
            pos += 1
        elif status is None:
            raise TruncatedChunk("data byte without running status", offset=pos)
        kind = status & 0xF0
        n = _DATA_LENGTHS.get(kind)
        if n is None:
            raise TruncatedChunk(f"unexpected status byte 0x{status:02X}", offset=pos)
        if pos + n > end:
            raise TruncatedChunk("channel event runs past chunk end", offset=pos)
        channel = status & 0x0F
        if kind == 0x90 and data[pos + 1] > 0:
            open_notes[(channel, data[pos])].append((tick, data[pos + 1]))
        elif kind in (0x80, 0x90):
            key = (channel, data[pos])
            if open_notes[key]:
                close(key, tick)
        pos += n

    # unterminated notes end with the track
    for key in sorted(open_notes):
        while open_notes[key]:
            close(key, tick)


def parse_midi(data: bytes) -> Score:
    """Parse the bytes of a format 0 or 1 Standard MIDI File."""
    data = bytes(data)
    if len(data) < 14 or data[:4] != b"MThd":
        raise MalformedHeader("missing MThd header", offset=0)
    (header_len,) = struct.unpack(">I", data[4:8])
    if header_len < 6 or 8 + header_len > len(data):
        raise MalformedHeader(f"bad header length {header_len}", offset=4)
    fmt, n_tracks, division = struct.unpack(">HHH", data[8:14])
    if fmt == 2:
        raise UnsupportedFormat("SMF format 2 is not supported", offset=8)
    if fmt > 2:
        raise MalformedHeader(f"unknown SMF format {fmt}", offset=8)
    if division & 0x8000 or division == 0:
        raise UnsupportedFormat("SMPTE or zero time division is not supported", offset=12)

    notes: list[NoteEvent] = []
    tempos: list[TempoChange] = []
    signatures: list[TimeSignature] = []
    pos = 8 + header_len
    track = 0
    while pos < len(data) and track < n_tracks:
        if pos + 8 > len(data):
            raise TruncatedChunk("truncated chunk header", offset=pos)
        kind = data[pos:pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        body = pos + 8
        if body + length > len(data):
            raise TruncatedChunk(f"chunk declares {length} bytes", offset=pos)
        if kind == b"MTrk":
            _parse_track(data, body, body + length, track, notes, tempos, signatures)
            track += 1
        pos = body + length
    if track < n_tracks:
        raise TruncatedChunk(f"header announces {n_tracks} tracks, found {track}", offset=pos)
    return Score(division, tuple(notes), tuple(tempos), tuple(signatures))


def read_midi(path: str | Path) -> Score:
    return parse_midi(Path(path).read_bytes())


# -- writing


def _vlq(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def write_midi(score: Score) -> bytes:
    """Serialize a score as a format 1 file.

    Track ``i`` of the output holds the notes whose ``track`` field is ``i``;
    track 0 also carries the tempo map and time signatures. At equal ticks,
    note-offs precede note-ons so that FIFO pairing on read gives back the
    same notes, provided no two notes on one (track, channel, pitch) nest.
    """
    n_tracks = max((n.track for n in score.notes), default=0) + 1
    # (tick, order, payload); order puts meta first, then offs, then ons
    events: list[list[tuple]] = [[] for _ in range(n_tracks)]
    for t in score.tempo_map:
        events[0].append((t.tick, 0, 0, b"\xff\x51\x03" + t.microseconds_per_quarter.to_bytes(3, "big")))
    for ts in score.time_signatures:
        log2 = ts.denominator.bit_length() - 1
        events[0].append((ts.tick, 0, 1, bytes([0xFF, 0x58, 4, ts.numerator, log2, 24, 8])))
    for i, n in enumerate(score.notes):
        events[n.track].append((n.offset_tick, 1, i, bytes([0x80 | n.channel, n.pitch, 0])))
        events[n.track].append((n.onset_tick, 2, i, bytes([0x90 | n.channel, n.pitch, n.velocity])))

    chunks = [b"MThd" + struct.pack(">IHHH", 6, 1, n_tracks, score.division)]
    for track_events in events:
        body = bytearray()
        tick = 0
        for at, _, _, payload in sorted(track_events, key=lambda e: e[:3]):
            body += _vlq(at - tick) + payload
            tick = at
        body += b"\x00\xff\x2f\x00"
        chunks.append(b"MTrk" + struct.pack(">I", len(body)) + bytes(body))
    return b"".join(chunks)
