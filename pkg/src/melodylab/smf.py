"""Standard MIDI File (format 0 and 1) reader and writer.

Bit-exact per the SMF layout: big-endian chunk lengths, variable-length
delta times, running status honored on read. The writer always emits
explicit status bytes. Only PPQ time division is supported; SMPTE
division is rejected.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from io import BytesIO

MTHD = b"MThd"
MTRK = b"MTrk"

META_TEMPO = 0x51
META_END_OF_TRACK = 0x2F

DEFAULT_TEMPO_US = 500000  # 120 BPM
PERCUSSION_CHANNEL = 9


class MidiError(ValueError):
    """Base class for malformed or unsupported MIDI input."""


class MalformedHeader(MidiError):
    """Bad chunk magic, bad header length, or an unsupported format."""


class UnsupportedDivision(MidiError):
    """SMPTE (or zero) time division; only positive PPQ is handled."""


class TruncatedTrack(MidiError):
    """Track bytes end mid-event or contain undecodable event data."""


@dataclass(frozen=True)
class ChannelEvent:
    tick: int
    status: int  # upper nibble, 0x8..0xE
    channel: int
    data1: int
    data2: int = 0


@dataclass(frozen=True)
class MetaEvent:
    tick: int
    meta_type: int
    data: bytes


@dataclass(frozen=True)
class SysexEvent:
    tick: int
    status: int  # 0xF0 or 0xF7
    data: bytes


TrackEvent = ChannelEvent | MetaEvent | SysexEvent


@dataclass(frozen=True)
class NoteEvent:
    """One sounding note on an absolute tick timeline."""

    onset_ticks: int
    duration_ticks: int
    pitch: int
    velocity: int
    channel: int = 0
    track_index: int = 0

    def __post_init__(self) -> None:
        if self.onset_ticks < 0:
            raise ValueError(f"negative onset {self.onset_ticks}")
        if self.duration_ticks < 1:
            raise ValueError(f"duration must be >= 1 tick, got {self.duration_ticks}")
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside 0..127")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside 1..127")
        if not 0 <= self.channel <= 15:
            raise ValueError(f"channel {self.channel} outside 0..15")


@dataclass(frozen=True)
class TempoMap:
    """Tempo changes as (tick, microseconds per quarter), first entry at tick 0."""

    changes: tuple[tuple[int, int], ...] = ((0, DEFAULT_TEMPO_US),)

    def __post_init__(self) -> None:
        if not self.changes or self.changes[0][0] != 0:
            raise ValueError("tempo map must start at tick 0")
        ticks = [t for t, _ in self.changes]
        if any(b <= a for a, b in zip(ticks, ticks[1:])):
            raise ValueError("tempo ticks must be strictly increasing")
        if any(us <= 0 for _, us in self.changes):
            raise ValueError("microseconds per quarter must be positive")

    def us_per_quarter_at(self, tick: int) -> int:
        current = self.changes[0][1]
        for t, us in self.changes:
            if t > tick:
                break
            current = us
        return current

    def seconds_at(self, tick: int, division: int) -> float:
        """Absolute time of a tick, integrating across tempo changes."""
        seconds = 0.0
        prev_tick, prev_us = self.changes[0]
        for t, us in self.changes[1:]:
            if t >= tick:
                break
            seconds += (t - prev_tick) * prev_us / (division * 1e6)
            prev_tick, prev_us = t, us
        seconds += (tick - prev_tick) * prev_us / (division * 1e6)
        return seconds


@dataclass
class MidiFile:
    format: int
    division: int
    tracks: list = field(default_factory=list)  # list of event lists, absolute ticks


def note_sort_key(note: NoteEvent):
    return (
        note.onset_ticks,
        note.channel,
        note.pitch,
        note.duration_ticks,
        note.velocity,
        note.track_index,
    )


def read_varint(data: bytes, pos: int) -> tuple[int, int]:
    """Decode one SMF variable-length quantity; returns (value, next position)."""
    value = 0
    for _ in range(4):  # spec caps varints at 4 bytes
        if pos >= len(data):
            raise TruncatedTrack("bytes end inside a variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise TruncatedTrack("variable-length quantity longer than 4 bytes")


def encode_varint(value: int) -> bytes:
    if value < 0 or value > 0x0FFFFFFF:
        raise ValueError(f"varint out of range: {value}")
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _data_byte(data: bytes, pos: int) -> tuple[int, int]:
    if pos >= len(data):
        raise TruncatedTrack("bytes end inside an event")
    byte = data[pos]
    if byte & 0x80:
        raise TruncatedTrack(f"expected data byte, got 0x{byte:02X}")
    return byte, pos + 1


# number of data bytes per channel-event status nibble
_CHANNEL_DATA_LEN = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


def _parse_track(data: bytes) -> list:
    """Parse one MTrk body into absolute-tick events, ending at End-of-Track."""
    events: list = []
    pos = 0
    tick = 0
    running_status: int | None = None
    while pos < len(data):
        delta, pos = read_varint(data, pos)
        tick += delta
        if pos >= len(data):
            raise TruncatedTrack("bytes end after a delta time")
        status = data[pos]
        if status & 0x80:
            pos += 1
        else:
            if running_status is None:
                raise TruncatedTrack("data byte with no running status")
            status = running_status

        if status == 0xFF:
            running_status = None
            if pos >= len(data):
                raise TruncatedTrack("bytes end inside a meta event")
            meta_type = data[pos]
            length, pos = read_varint(data, pos + 1)
            if pos + length > len(data):
                raise TruncatedTrack("meta event data exceeds track")
            events.append(MetaEvent(tick, meta_type, bytes(data[pos : pos + length])))
            pos += length
            if meta_type == META_END_OF_TRACK:
                return events
        elif status in (0xF0, 0xF7):
            running_status = None
            length, pos = read_varint(data, pos)
            if pos + length > len(data):
                raise TruncatedTrack("sysex data exceeds track")
            events.append(SysexEvent(tick, status, bytes(data[pos : pos + length])))
            pos += length
        elif status >= 0xF1:
            raise TruncatedTrack(f"unexpected system byte 0x{status:02X} in track")
        else:
            running_status = status
            kind = status >> 4
            channel = status & 0x0F
            d1, pos = _data_byte(data, pos)
            d2 = 0
            if _CHANNEL_DATA_LEN[kind] == 2:
                d2, pos = _data_byte(data, pos)
            events.append(ChannelEvent(tick, kind, channel, d1, d2))
    raise TruncatedTrack("track ends without End-of-Track")


def parse_midi(data: bytes) -> MidiFile:
    """Parse SMF bytes into a MidiFile of absolute-tick event lists.

    Handles running status and preserves unknown meta/sysex events opaquely.
    Raises MalformedHeader, UnsupportedDivision, or TruncatedTrack on bad input.
    """
    if len(data) < 4 or data[:4] != MTHD:
        raise MalformedHeader("input does not start with an MThd chunk")
    if len(data) < 14:
        raise MalformedHeader("header chunk truncated")
    (header_len,) = struct.unpack(">I", data[4:8])
    if header_len < 6:
        raise MalformedHeader(f"header length {header_len} < 6")
    if len(data) < 8 + header_len:
        raise MalformedHeader("header chunk exceeds file")
    fmt, ntracks, division = struct.unpack(">HHH", data[8:14])
    if fmt not in (0, 1):
        raise MalformedHeader(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise UnsupportedDivision("SMPTE time division is not supported")
    if division == 0:
        raise UnsupportedDivision("zero ticks per quarter")
    if fmt == 0 and ntracks != 1:
        raise MalformedHeader(f"format 0 requires exactly one track, got {ntracks}")

    tracks = []
    pos = 8 + header_len
    while len(tracks) < ntracks:
        if pos + 8 > len(data):
            raise TruncatedTrack(f"expected {ntracks} tracks, found {len(tracks)}")
        chunk_type = data[pos : pos + 4]
        (chunk_len,) = struct.unpack(">I", data[pos + 4 : pos + 8])
        pos += 8
        if pos + chunk_len > len(data):
            raise TruncatedTrack("chunk length exceeds file")
        if chunk_type == MTRK:
            tracks.append(_parse_track(data[pos : pos + chunk_len]))
        # alien chunks are skipped per the SMF spec
        pos += chunk_len
    return MidiFile(format=fmt, division=division, tracks=tracks)


def extract_notes(midi: MidiFile) -> tuple[list[NoteEvent], TempoMap]:
    """Pair note-on/note-off events into NoteEvents on a merged timeline.

    Pairing is FIFO per (channel, pitch); note-on with velocity 0 counts as
    note-off; percussion channel 9 is dropped; dangling note-ons are closed
    at the track's End-of-Track tick. Returns notes in canonical order
    together with the merged tempo map.
    """
    notes: list[NoteEvent] = []
    tempo_at: dict[int, int] = {}
    for track_index, events in enumerate(midi.tracks):
        open_notes: dict[tuple[int, int], list[tuple[int, int]]] = {}
        end_tick = events[-1].tick if events else 0
        for ev in events:
            if isinstance(ev, MetaEvent):
                if ev.meta_type == META_TEMPO and len(ev.data) == 3:
                    tempo_at[ev.tick] = int.from_bytes(ev.data, "big")
                continue
            if not isinstance(ev, ChannelEvent) or ev.channel == PERCUSSION_CHANNEL:
                continue
            is_on = ev.status == 0x9 and ev.data2 > 0
            is_off = ev.status == 0x8 or (ev.status == 0x9 and ev.data2 == 0)
            if not (is_on or is_off):
                continue
            key = (ev.channel, ev.data1)
            if is_on:
                open_notes.setdefault(key, []).append((ev.tick, ev.data2))
            elif open_notes.get(key):
                onset, velocity = open_notes[key].pop(0)
                notes.append(
                    NoteEvent(
                        onset_ticks=onset,
                        duration_ticks=max(1, ev.tick - onset),
                        pitch=ev.data1,
                        velocity=velocity,
                        channel=ev.channel,
                        track_index=track_index,
                    )
                )
        for (channel, pitch), pending in open_notes.items():
            for onset, velocity in pending:
                notes.append(
                    NoteEvent(
                        onset_ticks=onset,
                        duration_ticks=max(1, end_tick - onset),
                        pitch=pitch,
                        velocity=velocity,
                        channel=channel,
                        track_index=track_index,
                    )
                )
    notes.sort(key=note_sort_key)
    changes = sorted(tempo_at.items())
    if not changes or changes[0][0] != 0:
        changes.insert(0, (0, DEFAULT_TEMPO_US))
    return notes, TempoMap(tuple(changes))


def write_midi(
    notes: list[NoteEvent],
    tempo: TempoMap | None = None,
    division: int = 480,
) -> bytes:
    """Serialize notes to a format-0 SMF. An empty list yields a tempo-only track.

    Notes must be sorted by onset. Reparsing the output recovers the same
    note list (in canonical order) and tempo map.
    """
    if division <= 0 or division > 0x7FFF:
        raise ValueError(f"division must be in 1..32767, got {division}")
    if any(a.onset_ticks > b.onset_ticks for a, b in zip(notes, notes[1:])):
        raise ValueError("notes must be sorted by onset")
    tempo = tempo or TempoMap()

    # rank orders same-tick events: tempo, then note-offs, then note-ons
    timeline: list[tuple[int, int, int, int, bytes]] = []
    for tick, us in tempo.changes:
        timeline.append((tick, 0, 0, 0, bytes([0xFF, META_TEMPO, 3]) + us.to_bytes(3, "big")))
    for n in notes:
        off_tick = n.onset_ticks + n.duration_ticks
        timeline.append(
            (n.onset_ticks, 2, n.channel, n.pitch, bytes([0x90 | n.channel, n.pitch, n.velocity]))
        )
        timeline.append((off_tick, 1, n.channel, n.pitch, bytes([0x80 | n.channel, n.pitch, 0])))
    timeline.sort(key=lambda item: item[:4])

    body = BytesIO()
    prev_tick = 0
    for tick, _, _, _, payload in timeline:
        body.write(encode_varint(tick - prev_tick))
        body.write(payload)
        prev_tick = tick
    body.write(encode_varint(0))
    body.write(bytes([0xFF, META_END_OF_TRACK, 0]))

    track = body.getvalue()
    out = BytesIO()
    out.write(MTHD)
    out.write(struct.pack(">IHHH", 6, 0, 1, division))
    out.write(MTRK)
    out.write(struct.pack(">I", len(track)))
    out.write(track)
    return out.getvalue()
