"""Standard MIDI File parsing and writing.

Reads SMF format 0 and 1 byte streams into :class:`~keybench.notes.NoteSequence`
with tempo-map-correct absolute timing, and writes format-0 files back out.
Running status, velocity-0 note-offs and multi-track tempo maps are handled;
SysEx and control changes are skipped. Malformed input raises one of the
declared error classes below, never an unhandled exception.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .notes import NoteEvent, NoteSequence

DEFAULT_TEMPO = 500_000  # microseconds per quarter note
META_TEMPO = 0x51
META_END_OF_TRACK = 0x2F


class MidiError(Exception):
    """Base class for SMF parse errors."""


class MalformedHeader(MidiError):
    pass


class TruncatedTrack(MidiError):
    pass


class UnpairedNoteOn(MidiError):
    def __init__(self, pitch: int, tick: int):
        super().__init__(f"note-on pitch {pitch} at tick {tick} never released")
        self.pitch = pitch
        self.tick = tick


@dataclass(frozen=True)
class TempoMap:
    """Tempo changes as (tick, microseconds-per-quarter), sorted by tick.

    The first entry is always at tick 0; a file without any tempo event gets
    the SMF default of 500000 us/quarter.
    """

    entries: tuple[tuple[int, int], ...]
    ticks_per_quarter: int

    def tick_to_seconds(self, tick: int) -> float:
        seconds = 0.0
        for i, (t0, uspq) in enumerate(self.entries):
            t1 = self.entries[i + 1][0] if i + 1 < len(self.entries) else None
            if t1 is None or tick < t1:
                return seconds + (tick - t0) * uspq / (self.ticks_per_quarter * 1e6)
            seconds += (t1 - t0) * uspq / (self.ticks_per_quarter * 1e6)
        return seconds

    def seconds_to_tick(self, seconds: float) -> int:
        elapsed = 0.0
        for i, (t0, uspq) in enumerate(self.entries):
            t1 = self.entries[i + 1][0] if i + 1 < len(self.entries) else None
            per_tick = uspq / (self.ticks_per_quarter * 1e6)
            if t1 is None:
                return t0 + round((seconds - elapsed) / per_tick)
            span = (t1 - t0) * per_tick
            if seconds < elapsed + span:
                return t0 + round((seconds - elapsed) / per_tick)
            elapsed += span
        return 0

    @classmethod
    def constant(cls, ticks_per_quarter: int, uspq: int = DEFAULT_TEMPO) -> "TempoMap":
        return cls(entries=((0, uspq),), ticks_per_quarter=ticks_per_quarter)

    def single_tempo(self) -> int | None:
        """The file's one tempo in us/quarter, or None if it changes."""
        if len(self.entries) == 1:
            return self.entries[0][1]
        return None


def read_vlq(data: bytes, pos: int) -> tuple[int, int]:
    """Decode a variable-length quantity; returns (value, new position)."""
    value = 0
    for _ in range(4):
        if pos >= len(data):
            raise TruncatedTrack("track ended inside a variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise MalformedHeader("variable-length quantity longer than 4 bytes")


def write_vlq(value: int) -> bytes:
    if value < 0:
        raise ValueError("VLQ values must be non-negative")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _parse_track(data: bytes):
    """Yield (tick, status, payload) events from one MTrk chunk body."""
    pos = 0
    tick = 0
    running_status = None
    while pos < len(data):
        delta, pos = read_vlq(data, pos)
        tick += delta
        if pos >= len(data):
            raise TruncatedTrack("track ended after a delta time")
        byte = data[pos]
        if byte & 0x80:
            status = byte
            pos += 1
            if status < 0xF0:
                running_status = status
        else:
            if running_status is None:
                raise TruncatedTrack(
                    f"data byte 0x{byte:02x} with no running status"
                )
            status = running_status

        if status == 0xFF:
            if pos >= len(data):
                raise TruncatedTrack("truncated meta event")
            meta_type = data[pos]
            pos += 1
            length, pos = read_vlq(data, pos)
            if pos + length > len(data):
                raise TruncatedTrack("meta event payload past end of track")
            yield tick, status, (meta_type, data[pos:pos + length])
            pos += length
            if meta_type == META_END_OF_TRACK:
                return
        elif status in (0xF0, 0xF7):
            length, pos = read_vlq(data, pos)
            if pos + length > len(data):
                raise TruncatedTrack("sysex payload past end of track")
            pos += length
        elif status >= 0xF1:
            # System common messages: F1/F3 take one data byte, F2 two,
            # the rest none.
            n_data = {0xF1: 1, 0xF2: 2, 0xF3: 1}.get(status, 0)
            pos += n_data
        else:
            kind = status & 0xF0
            n_data = 1 if kind in (0xC0, 0xD0) else 2
            if pos + n_data > len(data):
                raise TruncatedTrack("channel event cut short")
            yield tick, status, tuple(data[pos:pos + n_data])
            pos += n_data


def parse_smf(data: bytes) -> tuple[NoteSequence, TempoMap]:
    """Parse an SMF byte stream into notes with absolute times in seconds.

    All channels are merged into one sequence (solo piano assumption). A
    note-on with velocity 0 releases like a note-off; a second note-on for a
    sounding pitch on the same channel closes the first note at the second's
    onset. Raises :class:`MalformedHeader`, :class:`TruncatedTrack` or
    :class:`UnpairedNoteOn` on bad input.
    """
    if len(data) < 14:
        raise MalformedHeader("file shorter than an SMF header")
    if data[:4] != b"MThd":
        raise MalformedHeader("missing MThd chunk")
    (header_len,) = struct.unpack(">I", data[4:8])
    if header_len < 6:
        raise MalformedHeader(f"header length {header_len} < 6")
    fmt, n_tracks, division = struct.unpack(">HHH", data[8:14])
    if fmt not in (0, 1):
        raise MalformedHeader(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise MalformedHeader("SMPTE time division not supported")
    if division == 0:
        raise MalformedHeader("zero ticks per quarter")
    pos = 8 + header_len

    tracks = []
    for _ in range(n_tracks):
        if pos + 8 > len(data):
            raise TruncatedTrack("expected MTrk chunk, hit end of file")
        chunk_id = data[pos:pos + 4]
        (chunk_len,) = struct.unpack(">I", data[pos + 4:pos + 8])
        body_start = pos + 8
        if body_start + chunk_len > len(data):
            raise TruncatedTrack(f"chunk length {chunk_len} past end of file")
        if chunk_id == b"MTrk":
            tracks.append(data[body_start:body_start + chunk_len])
        pos = body_start + chunk_len
    if not tracks:
        raise MalformedHeader("no MTrk chunks present")

    tempo_entries: dict[int, int] = {}
    events = []  # (tick, channel, pitch, velocity, is_on)
    max_tick = 0
    for track in tracks:
        for tick, status, payload in _parse_track(track):
            max_tick = max(max_tick, tick)
            if status == 0xFF:
                meta_type, body = payload
                if meta_type == META_TEMPO and len(body) == 3:
                    uspq = (body[0] << 16) | (body[1] << 8) | body[2]
                    tempo_entries[tick] = uspq
                continue
            kind = status & 0xF0
            channel = status & 0x0F
            if kind == 0x90:
                pitch, velocity = payload
                events.append((tick, channel, pitch, velocity, velocity > 0))
            elif kind == 0x80:
                pitch, _ = payload
                events.append((tick, channel, pitch, 0, False))

    entries = sorted(tempo_entries.items())
    if not entries or entries[0][0] != 0:
        entries.insert(0, (0, DEFAULT_TEMPO))
    tempo_map = TempoMap(entries=tuple(entries), ticks_per_quarter=division)

    # Pair note-ons with the next matching release per (channel, pitch).
    events.sort(key=lambda e: (e[0], e[4]))  # releases before onsets per tick
    open_notes: dict[tuple[int, int], tuple[int, int]] = {}
    notes = []

    def close(channel: int, pitch: int, end_tick: int):
        on_tick, velocity = open_notes.pop((channel, pitch))
        if end_tick > on_tick:
            notes.append(
                NoteEvent(
                    pitch,
                    tempo_map.tick_to_seconds(on_tick),
                    tempo_map.tick_to_seconds(end_tick),
                    velocity,
                )
            )

    for tick, channel, pitch, velocity, is_on in events:
        key = (channel, pitch)
        if is_on:
            if key in open_notes:
                close(channel, pitch, tick)
            open_notes[key] = (tick, velocity)
        elif key in open_notes:
            close(channel, pitch, tick)

    if open_notes:
        (channel, pitch), (tick, _) = next(iter(open_notes.items()))
        raise UnpairedNoteOn(pitch, tick)

    duration = tempo_map.tick_to_seconds(max_tick)
    seq = NoteSequence.from_notes(notes, duration=duration)
    return seq, tempo_map


def write_smf(seq: NoteSequence, ticks_per_quarter: int = 480) -> bytes:
    """Serialize a sequence as a single-tempo format-0 SMF.

    The fixed tempo is 500000 us/quarter, so one tick lasts
    ``0.5 / ticks_per_quarter`` seconds and round-trip timing error stays
    below half of that.
    """
    if ticks_per_quarter <= 0 or ticks_per_quarter > 0x7FFF:
        raise ValueError(f"ticks_per_quarter out of range: {ticks_per_quarter}")

    ticks_per_second = ticks_per_quarter * 1e6 / DEFAULT_TEMPO
    # (tick, order, status, data1, data2): note-offs sort before note-ons at
    # the same tick so back-to-back repeats of a pitch stay paired.
    events = []
    for note in seq.notes:
        on_tick = round(note.onset * ticks_per_second)
        off_tick = round(note.offset * ticks_per_second)
        if off_tick <= on_tick:
            off_tick = on_tick + 1
        events.append((on_tick, 1, 0x90, note.pitch, note.velocity))
        events.append((off_tick, 0, 0x80, note.pitch, 0))
    events.sort()

    body = bytearray()
    body += write_vlq(0)
    body += bytes([0xFF, META_TEMPO, 3])
    body += DEFAULT_TEMPO.to_bytes(3, "big")
    prev_tick = 0
    for tick, _, status, data1, data2 in events:
        body += write_vlq(tick - prev_tick)
        body += bytes([status, data1, data2])
        prev_tick = tick
    body += write_vlq(0)
    body += bytes([0xFF, META_END_OF_TRACK, 0])

    out = bytearray()
    out += b"MThd"
    out += struct.pack(">IHHH", 6, 0, 1, ticks_per_quarter)
    out += b"MTrk"
    out += struct.pack(">I", len(body))
    out += body
    return bytes(out)


def load(path) -> NoteSequence:
    with open(path, "rb") as f:
        return parse_smf(f.read())[0]


def save(seq: NoteSequence, path, ticks_per_quarter: int = 480) -> None:
    with open(path, "wb") as f:
        f.write(write_smf(seq, ticks_per_quarter))
