"""Canonical in-memory score representation and parsers.

A :class:`Score` is an immutable, ordered collection of notes with integer
timing expressed in per-score divisions (MIDI ticks, or the divisions
declared by a note-list document), plus a time-signature map.  Notes are
kept sorted by ``(onset, pitch, id)``; that ordering is the contract every
downstream stage (graph construction, windowed sampling, batch unfolding)
relies on.
"""

from __future__ import annotations

import json
import struct
import warnings
from collections import deque
from dataclasses import dataclass, field, replace

from .errors import MidiWarning, ParseError, ValidationError


@dataclass(frozen=True)
class Note:
    """One note event. Times are integers in score divisions."""

    id: int
    onset: int
    duration: int
    pitch: int
    voice: int | None = None
    channel: int | None = None


@dataclass(frozen=True)
class TimeSigEvent:
    """Time signature taking effect at division ``at``."""

    at: int
    numerator: int
    denominator: int


@dataclass(frozen=True)
class Score:
    notes: tuple[Note, ...]
    divisions_per_quarter: int
    time_sigs: tuple[TimeSigEvent, ...] = (TimeSigEvent(0, 4, 4),)
    source_name: str = field(default="", compare=False)

    def __len__(self) -> int:
        return len(self.notes)


@dataclass(frozen=True)
class Violation:
    """One invariant breach found by :func:`validate_score`."""

    field: str
    message: str
    note_id: int | None = None

    def __str__(self) -> str:
        where = f" (note id {self.note_id})" if self.note_id is not None else ""
        return f"{self.field}: {self.message}{where}"


def sort_score(score: Score) -> tuple[Score, dict[int, int]]:
    """Order notes by (onset, pitch, id) and reassign dense ids.

    Returns the sorted score together with an old-id -> new-id remap table.
    Idempotent; preserves the note multiset.
    """
    order = sorted(range(len(score.notes)),
                   key=lambda i: (score.notes[i].onset,
                                  score.notes[i].pitch,
                                  score.notes[i].id))
    remap = {score.notes[i].id: k for k, i in enumerate(order)}
    notes = tuple(replace(score.notes[i], id=k) for k, i in enumerate(order))
    return replace(score, notes=notes), remap


def validate_score(score: Score) -> list[Violation]:
    """Check every Note/Score invariant; return [] iff the score is valid."""
    out: list[Violation] = []
    if score.divisions_per_quarter <= 0:
        out.append(Violation("divisions_per_quarter", "must be positive"))
    for n in score.notes:
        if n.onset < 0:
            out.append(Violation("onset", f"negative onset {n.onset}", n.id))
        if n.duration < 0:
            out.append(Violation("duration", f"negative duration {n.duration}", n.id))
        if not 0 <= n.pitch <= 127:
            out.append(Violation("pitch", f"pitch {n.pitch} outside 0..127", n.id))
        if n.voice is not None and n.voice < 0:
            out.append(Violation("voice", f"negative voice {n.voice}", n.id))

    by_id: dict[int, list[int]] = {}
    for idx, n in enumerate(score.notes):
        by_id.setdefault(n.id, []).append(idx)
    for nid, idxs in sorted(by_id.items()):
        # one violation per duplicate pair
        c = len(idxs)
        for _ in range(c * (c - 1) // 2):
            out.append(Violation("id", f"duplicate note id {nid}", nid))

    keys = [(n.onset, n.pitch, n.id) for n in score.notes]
    if any(a > b for a, b in zip(keys, keys[1:])):
        out.append(Violation("notes", "not sorted by (onset, pitch, id)"))

    ats = [t.at for t in score.time_sigs]
    if ats and (ats != sorted(ats) or ats[0] != 0):
        out.append(Violation("time_sigs", "events must be sorted with the first at 0"))
    for t in score.time_sigs:
        if t.numerator < 1:
            out.append(Violation("time_sigs", f"non-positive numerator {t.numerator}"))
        if t.denominator < 1 or t.denominator & (t.denominator - 1):
            out.append(Violation(
                "time_sigs", f"denominator {t.denominator} is not a power of two"))
    return out


# ---------------------------------------------------------------------------
# note-list JSON format
# ---------------------------------------------------------------------------

def _require_int(value, where, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{where}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ParseError(f"{where}: expected an integer >= {minimum}, got {value}")
    return value


def parse_note_json(data: bytes | str, source_name: str = "<notes-json>") -> Score:
    """Parse the canonical note-list JSON document into a sorted Score.

    The document shape is::

        {"divisions_per_quarter": int,
         "time_signatures": [{"at": int, "num": int, "den": int}, ...],
         "notes": [{"onset": int, "duration": int, "pitch": int, "voice": int?}, ...]}

    ``time_signatures`` may be omitted; a 4/4 at division 0 is assumed.
    Malformed structure raises :class:`ParseError` with field context;
    out-of-range note values raise :class:`ValidationError` listing every
    offending note id (ids are positions in the document's note array).
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as e:
        raise ParseError(
            f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError("top level: expected an object")

    div = _require_int(doc.get("divisions_per_quarter"),
                       "divisions_per_quarter", minimum=1)

    raw_sigs = doc.get("time_signatures", [])
    if not isinstance(raw_sigs, list):
        raise ParseError("time_signatures: expected an array")
    sigs = []
    for i, ts in enumerate(raw_sigs):
        if not isinstance(ts, dict):
            raise ParseError(f"time_signatures[{i}]: expected an object")
        sigs.append(TimeSigEvent(
            at=_require_int(ts.get("at"), f"time_signatures[{i}].at", minimum=0),
            numerator=_require_int(ts.get("num"), f"time_signatures[{i}].num"),
            denominator=_require_int(ts.get("den"), f"time_signatures[{i}].den"),
        ))
    sigs.sort(key=lambda t: t.at)
    if not sigs or sigs[0].at != 0:
        sigs.insert(0, TimeSigEvent(0, 4, 4))

    raw_notes = doc.get("notes")
    if not isinstance(raw_notes, list):
        raise ParseError("notes: expected an array")
    notes = []
    for i, nt in enumerate(raw_notes):
        if not isinstance(nt, dict):
            raise ParseError(f"notes[{i}]: expected an object")
        voice = nt.get("voice")
        if voice is not None:
            voice = _require_int(voice, f"notes[{i}].voice")
        notes.append(Note(
            id=i,
            onset=_require_int(nt.get("onset"), f"notes[{i}].onset"),
            duration=_require_int(nt.get("duration"), f"notes[{i}].duration"),
            pitch=_require_int(nt.get("pitch"), f"notes[{i}].pitch"),
            voice=voice,
        ))

    score = Score(notes=tuple(notes), divisions_per_quarter=div,
                  time_sigs=tuple(sigs), source_name=source_name)
    violations = validate_score(score)
    violations = [v for v in violations if v.field != "notes"]  # sorted below
    if violations:
        raise ValidationError(violations)
    score, _ = sort_score(score)
    return score


def serialize_note_json(score: Score) -> bytes:
    """Serialize a Score back to the canonical note-list document.

    Channel provenance is not part of the note-list format and is dropped;
    parse -> serialize -> parse is the identity for scores that originate
    from :func:`parse_note_json`.
    """
    doc = {
        "divisions_per_quarter": score.divisions_per_quarter,
        "time_signatures": [
            {"at": t.at, "num": t.numerator, "den": t.denominator}
            for t in score.time_sigs
        ],
        "notes": [
            {"onset": n.onset, "duration": n.duration, "pitch": n.pitch}
            | ({"voice": n.voice} if n.voice is not None else {})
            for n in score.notes
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


# ---------------------------------------------------------------------------
# Standard MIDI File parsing (formats 0/1)
# ---------------------------------------------------------------------------

_META_EVENT = 0xFF
_SYSEX = (0xF0, 0xF7)
# system common/realtime operand byte counts, for tolerant skipping
_SYSTEM_DATA_BYTES = {0xF1: 1, 0xF2: 2, 0xF3: 1, 0xF6: 0,
                      0xF8: 0, 0xFA: 0, 0xFB: 0, 0xFC: 0, 0xFE: 0}


def _read_vlq(data: bytes, pos: int) -> tuple[int, int]:
    """Read a MIDI variable-length quantity starting at pos."""
    value = 0
    for _ in range(4):
        if pos >= len(data):
            raise ParseError("truncated variable-length quantity")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise ParseError("variable-length quantity longer than 4 bytes")


def _parse_track(track: bytes, track_index: int):
    """Walk one MTrk chunk.

    Returns (note events, time-signature events, last tick). Note events are
    ``(tick, track_index, seq, kind, channel, pitch)`` with kind 'on'/'off';
    a note-on with velocity 0 is already folded into 'off'.
    """
    events = []
    tsigs = []
    tick = 0
    pos = 0
    seq = 0
    running: int | None = None
    while pos < len(track):
        delta, pos = _read_vlq(track, pos)
        tick += delta
        if pos >= len(track):
            raise ParseError("truncated event")
        status = track[pos]
        if status >= 0x80:
            pos += 1
            if status < 0xF0:
                running = status
        else:
            if running is None:
                raise ParseError("data byte with no running status")
            status = running

        if status == _META_EVENT:
            running = None
            if pos >= len(track):
                raise ParseError("truncated meta event")
            mtype = track[pos]
            pos += 1
            length, pos = _read_vlq(track, pos)
            payload = track[pos:pos + length]
            if len(payload) < length:
                raise ParseError("truncated meta event payload")
            pos += length
            if mtype == 0x58 and length >= 2:
                tsigs.append((tick, payload[0], 1 << payload[1]))
            elif mtype == 0x2F:
                break
        elif status in _SYSEX:
            running = None
            length, pos = _read_vlq(track, pos)
            if pos + length > len(track):
                raise ParseError("truncated sysex event")
            pos += length
        elif status >= 0xF0:
            running = None
            skip = _SYSTEM_DATA_BYTES.get(status)
            if skip is None:
                raise ParseError(f"unsupported status byte {status:#04x}")
            pos += skip
        else:
            kind = status & 0xF0
            channel = status & 0x0F
            ndata = 1 if kind in (0xC0, 0xD0) else 2
            if pos + ndata > len(track):
                raise ParseError("truncated channel event")
            data1 = track[pos]
            data2 = track[pos + 1] if ndata == 2 else 0
            pos += ndata
            if data1 > 127 or data2 > 127:
                raise ParseError("channel event data byte out of range")
            if kind == 0x90 and data2 > 0:
                events.append((tick, track_index, seq, "on", channel, data1))
            elif kind == 0x80 or (kind == 0x90 and data2 == 0):
                events.append((tick, track_index, seq, "off", channel, data1))
        seq += 1
    return events, tsigs, tick


def parse_midi(data: bytes, source_name: str = "<midi>") -> Score:
    """Parse a Standard MIDI File (format 0 or 1) into a sorted Score.

    All tracks are merged into one note stream; onsets and durations are in
    ticks and ``divisions_per_quarter`` is the file's PPQ.  Only note-on/off
    and time-signature meta events are interpreted; everything else is
    skipped.  Overlapping same-pitch notes are matched first-in-first-out
    per (channel, pitch).

    Raises :class:`ParseError` for a bad header, unsupported format, SMPTE
    time division, or truncated chunks.  A dangling note-on (closed at the
    final tick) or a note-off with no open note (ignored) is reported via
    :class:`MidiWarning`.
    """
    if len(data) < 14 or data[:4] != b"MThd":
        raise ParseError("not a Standard MIDI File (missing MThd header)")
    header_len = struct.unpack(">I", data[4:8])[0]
    if header_len < 6 or 8 + header_len > len(data):
        raise ParseError(f"bad MThd length {header_len}")
    fmt, ntrks, division = struct.unpack(">HHH", data[8:14])
    if fmt not in (0, 1):
        raise ParseError(f"unsupported SMF format {fmt}")
    if division & 0x8000:
        raise ParseError("SMPTE time division is not supported")
    if division == 0:
        raise ParseError("zero ticks-per-quarter division")

    pos = 8 + header_len
    all_events = []
    tsig_by_tick: dict[int, tuple[int, int]] = {}
    final_tick = 0
    for track_index in range(ntrks):
        if pos + 8 > len(data):
            raise ParseError(f"missing track chunk {track_index}")
        if data[pos:pos + 4] != b"MTrk":
            raise ParseError(f"bad track chunk magic at offset {pos}")
        tlen = struct.unpack(">I", data[pos + 4:pos + 8])[0]
        chunk = data[pos + 8:pos + 8 + tlen]
        if len(chunk) < tlen:
            raise ParseError(f"truncated track chunk {track_index}")
        pos += 8 + tlen
        events, tsigs, last_tick = _parse_track(chunk, track_index)
        all_events.extend(events)
        for tick, num, den in tsigs:
            tsig_by_tick[tick] = (num, den)
        final_tick = max(final_tick, last_tick)

    all_events.sort(key=lambda e: (e[0], e[1], e[2]))

    open_notes: dict[tuple[int, int], deque[int]] = {}
    notes: list[Note] = []
    orphan_offs = 0
    for tick, _track, _seq, kind, channel, pitch in all_events:
        key = (channel, pitch)
        if kind == "on":
            open_notes.setdefault(key, deque()).append(tick)
        else:
            stack = open_notes.get(key)
            if stack:
                start = stack.popleft()
                notes.append(Note(id=len(notes), onset=start,
                                  duration=tick - start, pitch=pitch,
                                  channel=channel))
            else:
                orphan_offs += 1
    if orphan_offs:
        warnings.warn(f"{source_name}: ignored {orphan_offs} note-off event(s) "
                      "with no matching note-on", MidiWarning, stacklevel=2)

    dangling = 0
    for (channel, pitch), stack in sorted(open_notes.items()):
        for start in stack:
            notes.append(Note(id=len(notes), onset=start,
                              duration=final_tick - start, pitch=pitch,
                              channel=channel))
            dangling += 1
    if dangling:
        warnings.warn(f"{source_name}: closed {dangling} dangling note-on "
                      "event(s) at the final tick", MidiWarning, stacklevel=2)

    sigs = [TimeSigEvent(at=t, numerator=n, denominator=d)
            for t, (n, d) in sorted(tsig_by_tick.items())]
    if not sigs or sigs[0].at != 0:
        sigs.insert(0, TimeSigEvent(0, 4, 4))

    score = Score(notes=tuple(notes), divisions_per_quarter=division,
                  time_sigs=tuple(sigs), source_name=source_name)
    score, _ = sort_score(score)
    return score
