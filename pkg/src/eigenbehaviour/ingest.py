"""Sensor event logs -> per-day location timelines.

Location between PIR firings is held at the room of the last motion event.
An entrance-door event followed by a quiet period of at least
``quiet_period`` seconds switches the location to ``outside`` until the next
motion event starts.
"""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import heapq
import io
import json
import logging
import math
from dataclasses import dataclass, field
from itertools import groupby
from pathlib import Path
from typing import IO, Iterable, Mapping, NamedTuple, Sequence
from zoneinfo import ZoneInfo

from .errors import DataError, HeaderError, UnknownRoomError

log = logging.getLogger(__name__)

LOCATIONS = ("bedroom", "bathroom", "living_room", "kitchen", "entrance", "outside")
INDOOR = LOCATIONS[:-1]
DOORS = ("entrance_door", "fridge_door")
KINDS = ("motion",) + DOORS
DAY_SECONDS = 86400
DEFAULT_QUIET_PERIOD = 300.0

CSV_FIELDS = ("person_id", "sensor_id", "room", "start_iso8601", "duration_s", "kind")
_REQUIRED = ("person_id", "sensor_id", "start_iso8601", "duration_s", "kind")

_ROOM_ALIASES = {
    "living room": "living_room",
    "living-room": "living_room",
    "livingroom": "living_room",
    "entrance door": "entrance_door",
    "fridge door": "fridge_door",
}


def canonical_room(label: str) -> str:
    """Normalise a room label; raise :class:`UnknownRoomError` if it is not known."""
    key = label.strip().lower()
    key = _ROOM_ALIASES.get(key, key)
    if key not in LOCATIONS and key not in DOORS:
        raise UnknownRoomError(f"unknown room label {label!r}")
    return key


def parse_timestamp(text: str) -> float:
    """ISO-8601 -> POSIX seconds. Naive timestamps are taken as UTC."""
    text = text.strip()
    if text[-1:] in ("Z", "z"):
        text = text[:-1] + "+00:00"
    stamp = dt.datetime.fromisoformat(text)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=dt.timezone.utc)
    return stamp.timestamp()


def format_timestamp(seconds: float) -> str:
    stamp = dt.datetime.fromtimestamp(seconds, tz=dt.timezone.utc)
    if seconds == int(seconds):
        return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")
    return stamp.isoformat().replace("+00:00", "Z")


@dataclass(frozen=True)
class SensorEvent:
    person_id: str
    sensor_id: str
    room: str
    start: float
    duration: float
    kind: str

    def __post_init__(self):
        if not self.person_id:
            raise ValueError("empty person_id")
        if self.kind not in KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if not math.isfinite(self.start):
            raise ValueError("start must be finite")
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise ValueError(f"duration must be finite and >= 0, got {self.duration}")
        if self.kind == "motion":
            if self.room not in INDOOR:
                raise ValueError(f"motion event in non-indoor room {self.room!r}")
        elif self.room != self.kind:
            raise ValueError(f"{self.kind} event labelled with room {self.room!r}")

    @property
    def end(self) -> float:
        return self.start + self.duration

    def sort_key(self):
        return (self.person_id, self.start, self.sensor_id)


class ParsedLog(NamedTuple):
    events: list
    malformed: int


def _decode(stream) -> str:
    if isinstance(stream, (bytes, bytearray)):
        return bytes(stream).decode("utf-8-sig")
    if isinstance(stream, str):
        return stream
    data = stream.read()
    if isinstance(data, bytes):
        return data.decode("utf-8-sig")
    return data


def _event_from_fields(rec: Mapping, room_map: Mapping[str, str] | None) -> SensorEvent:
    sensor_id = str(rec["sensor_id"]).strip()
    room = rec.get("room")
    if room is None or str(room).strip() == "":
        if room_map is None or sensor_id not in room_map:
            raise ValueError(f"no room for sensor {sensor_id!r}")
        room = room_map[sensor_id]
    room = canonical_room(str(room))
    return SensorEvent(
        person_id=str(rec["person_id"]).strip(),
        sensor_id=sensor_id,
        room=room,
        start=parse_timestamp(str(rec["start_iso8601"])),
        duration=float(rec["duration_s"]),
        kind=str(rec["kind"]).strip().lower(),
    )


def parse_event_log(stream, fmt: str = "csv", room_map: Mapping[str, str] | None = None) -> ParsedLog:
    """Parse a CSV or JSON-lines event log.

    Malformed rows are skipped and counted. A missing or unreadable header and
    an unknown room label are fatal. The result is sorted by
    ``(person_id, start, sensor_id)``.
    """
    text = _decode(stream)
    if room_map is not None:
        room_map = {k: canonical_room(v) for k, v in room_map.items()}
    events: list[SensorEvent] = []
    malformed = 0

    if fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise HeaderError("event log is empty (no header)") from None
        missing = [c for c in _REQUIRED if c not in header]
        if missing:
            raise HeaderError(f"event log header lacks columns {missing}")
        if "room" not in header and room_map is None:
            raise HeaderError("event log has no room column and no room map was given")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                malformed += 1
                log.warning("line %d: expected %d fields, got %d", lineno, len(header), len(row))
                continue
            try:
                events.append(_event_from_fields(dict(zip(header, row)), room_map))
            except UnknownRoomError:
                raise
            except (ValueError, KeyError) as exc:
                malformed += 1
                log.warning("line %d: %s", lineno, exc)
    elif fmt in ("jsonl", "json-lines", "ndjson"):
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("line is not a JSON object")
                events.append(_event_from_fields(rec, room_map))
            except UnknownRoomError:
                raise
            except (ValueError, KeyError, TypeError) as exc:
                malformed += 1
                log.warning("line %d: %s", lineno, exc)
    else:
        raise ValueError(f"unsupported event log format {fmt!r}")

    events.sort(key=SensorEvent.sort_key)
    if malformed:
        log.warning("skipped %d malformed event rows", malformed)
    return ParsedLog(events, malformed)


def read_event_log(path, room_map: Mapping[str, str] | None = None) -> ParsedLog:
    path = Path(path)
    fmt = "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"
    with open(path, "rb") as fh:
        return parse_event_log(fh, fmt, room_map)


def load_room_map(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise DataError("room map must be a JSON object of sensor_id -> room")
    return {str(k): canonical_room(str(v)) for k, v in raw.items()}


def write_event_log(events: Iterable[SensorEvent], fh: IO[str], fmt: str = "csv") -> None:
    if fmt == "csv":
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for e in events:
            writer.writerow([e.person_id, e.sensor_id, e.room, format_timestamp(e.start), _num(e.duration), e.kind])
    else:
        for e in events:
            rec = dict(zip(CSV_FIELDS, (e.person_id, e.sensor_id, e.room, format_timestamp(e.start), e.duration, e.kind)))
            fh.write(json.dumps(rec) + "\n")


def _num(x: float) -> str:
    return str(int(x)) if x == int(x) else repr(float(x))


# --------------------------------------------------------------------------
# timelines


@dataclass(frozen=True)
class DayTimeline:
    """One calendar day as a piecewise-constant location over ``[0, 86400)``.

    ``coverage`` is the fraction of the day covered by motion firings before
    any hold-last filling. ``flags`` carries data-quality markers
    (``"no_events"``, ``"dst_rescaled"``).
    """

    person_id: str
    date: dt.date
    segments: tuple
    coverage: float = 1.0
    flags: tuple = field(default=())

    def __post_init__(self):
        segs = tuple((float(a), float(b), str(loc)) for a, b, loc in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("timeline has no segments")
        if segs[0][0] != 0.0 or segs[-1][1] != DAY_SECONDS:
            raise ValueError("segments must cover [0, 86400)")
        for (a, b, loc), nxt in zip(segs, segs[1:] + (None,)):
            if not b > a:
                raise ValueError(f"empty or reversed segment ({a}, {b})")
            if loc not in LOCATIONS:
                raise ValueError(f"unknown location {loc!r}")
            if nxt is not None and nxt[0] != b:
                raise ValueError("segments are not contiguous")

    def location_at(self, offset: float) -> str:
        i = bisect.bisect_right([s[0] for s in self.segments], offset) - 1
        return self.segments[max(i, 0)][2]

    def to_json(self) -> dict:
        return {
            "person_id": self.person_id,
            "date": self.date.isoformat(),
            "segments": [[a, b, loc] for a, b, loc in self.segments],
            "coverage": self.coverage,
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, rec: Mapping) -> "DayTimeline":
        return cls(
            person_id=rec["person_id"],
            date=dt.date.fromisoformat(rec["date"]),
            segments=tuple(tuple(s) for s in rec["segments"]),
            coverage=float(rec.get("coverage", 1.0)),
            flags=tuple(rec.get("flags", ())),
        )


def merge_segments(segments: Iterable[tuple]) -> list:
    """Drop empty pieces and fuse neighbours that share a location."""
    out: list = []
    for a, b, loc in segments:
        if b <= a:
            continue
        if out and out[-1][2] == loc and out[-1][1] == a:
            out[-1] = (out[-1][0], b, loc)
        else:
            out.append((a, b, loc))
    return out


def _paint(segments: list, intervals: list, loc: str) -> list:
    """Overwrite ``segments`` with ``loc`` on the (sorted, disjoint) ``intervals``."""
    if not intervals:
        return segments
    out = []
    j = 0
    for a, b, cur in segments:
        pos = a
        while j < len(intervals) and intervals[j][1] <= pos:
            j += 1
        k = j
        while k < len(intervals) and intervals[k][0] < b:
            ia, ib = intervals[k]
            if ia > pos:
                out.append((pos, ia, cur))
            lo, hi = max(ia, pos), min(ib, b)
            if hi > lo:
                out.append((lo, hi, loc))
            pos = max(pos, hi)
            if ib > b:
                break
            k += 1
        if pos < b:
            out.append((pos, b, cur))
    return out


def _union(intervals: list) -> list:
    merged: list = []
    for a, b in sorted(intervals):
        if b <= a:
            continue
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def _motion_sweep(motion: Sequence[SensorEvent], t0: float, t1: float) -> list:
    """Piecewise location from motion events alone, over ``[t0, t1)``.

    An active event with the greatest ``(start, sensor_id)`` rank wins; when
    no event is active the room of the started event with the greatest
    ``(end, rank)`` is held. Before the first motion event its room is used.
    """
    if not motion:
        return [(t0, t1, "outside")]
    points = sorted({t0} | {e.start for e in motion} | {e.end for e in motion})
    points = [p for p in points if t0 <= p < t1]
    active: list = []
    held_key = None
    held_room = motion[0].room
    i = 0
    segs = []
    for k, b in enumerate(points):
        while i < len(motion) and motion[i].start <= b:
            e = motion[i]
            heapq.heappush(active, (-i, e.end, e.room))
            key = (e.end, i)
            if held_key is None or key > held_key:
                held_key, held_room = key, e.room
            i += 1
        while active and active[0][1] <= b:
            heapq.heappop(active)
        room = active[0][2] if active else held_room
        nxt = points[k + 1] if k + 1 < len(points) else t1
        segs.append((b, nxt, room))
    return merge_segments(segs)


def _day_bounds(date: dt.date, tz) -> tuple:
    start = dt.datetime.combine(date, dt.time(0), tzinfo=tz).timestamp()
    end = dt.datetime.combine(date + dt.timedelta(days=1), dt.time(0), tzinfo=tz).timestamp()
    return start, end


def _person_timelines(events: Sequence[SensorEvent], tz, quiet_period: float) -> list:
    person = events[0].person_id
    motion = [e for e in events if e.kind == "motion"]
    doors = [e for e in events if e.kind == "entrance_door"]

    first = dt.datetime.fromtimestamp(events[0].start, tz).date()
    last = dt.datetime.fromtimestamp(max(e.start for e in events), tz).date()
    dates = [first + dt.timedelta(days=k) for k in range((last - first).days + 1)]
    bounds = [_day_bounds(d, tz) for d in dates]
    t0, t1 = bounds[0][0], bounds[-1][1]

    segments = _motion_sweep(motion, t0, t1)

    starts = [e.start for e in motion]
    prefix_end = []
    run = -math.inf
    for e in motion:
        run = max(run, e.end)
        prefix_end.append(run)

    def next_motion_after(t: float, strict: bool) -> float:
        k = bisect.bisect_right(starts, t) if strict else bisect.bisect_left(starts, t)
        return starts[k] if k < len(starts) else t1

    outside = []
    for door in doors:
        tau = door.start
        k = bisect.bisect_right(starts, tau)
        quiet_from = max(tau, prefix_end[k - 1]) if k else tau
        resume = next_motion_after(tau, strict=True)
        if resume > quiet_from + quiet_period:
            outside.append((quiet_from + quiet_period, resume))

    # days with no event starting in them and no motion overlapping them
    event_starts = sorted(e.start for e in events)
    motion_union = _union([(e.start, e.end) for e in motion])
    empty = set()
    for idx, (ds, de) in enumerate(bounds):
        j = bisect.bisect_left(event_starts, ds)
        if j < len(event_starts) and event_starts[j] < de:
            continue
        if any(a < de and b > ds for a, b in motion_union):
            continue
        empty.add(idx)
        outside.append((ds, next_motion_after(ds, strict=False)))

    segments = merge_segments(_paint(segments, _union(outside), "outside"))

    timelines = []
    seg_starts = [s[0] for s in segments]
    for idx, (date, (ds, de)) in enumerate(zip(dates, bounds)):
        length = de - ds
        scale = DAY_SECONDS / length
        k = max(bisect.bisect_right(seg_starts, ds) - 1, 0)
        pieces = []
        while k < len(segments) and segments[k][0] < de:
            a, b, loc = segments[k]
            lo, hi = max(a, ds), min(b, de)
            if hi > lo:
                pieces.append(((lo - ds) * scale, (hi - ds) * scale, loc))
            k += 1
        pieces = merge_segments(pieces)
        a, _, loc = pieces[-1]
        pieces[-1] = (a, float(DAY_SECONDS), loc)
        pieces[0] = (0.0, pieces[0][1], pieces[0][2])
        attested = sum(max(0.0, min(b, de) - max(a, ds)) for a, b in motion_union if a < de and b > ds)
        flags = []
        if idx in empty:
            flags.append("no_events")
        if length != DAY_SECONDS:
            flags.append("dst_rescaled")
        timelines.append(DayTimeline(person, date, tuple(pieces), attested / length, tuple(flags)))
    return timelines


def build_day_timelines(
    events: Iterable[SensorEvent],
    tz: str = "UTC",
    quiet_period: float = DEFAULT_QUIET_PERIOD,
    drop_edge_days: bool = True,
) -> list:
    """Build one :class:`DayTimeline` per person per local calendar day.

    Days run from local midnight to local midnight in ``tz``. Days of other
    than 86400 s (DST changes) are rescaled onto ``[0, 86400)`` and flagged.
    With ``drop_edge_days`` the first and last day of every person's
    measurement period are discarded.
    """
    zone = ZoneInfo(tz)
    ordered = sorted(events, key=SensorEvent.sort_key)
    out = []
    for _, group in groupby(ordered, key=lambda e: e.person_id):
        days = _person_timelines(list(group), zone, quiet_period)
        if drop_edge_days:
            days = days[1:-1]
        out.extend(days)
    return out


def filter_days(timelines: Sequence[DayTimeline], min_coverage: float = 0.0) -> list:
    """Keep days whose motion-attested fraction is at least ``min_coverage``."""
    if not 0.0 <= min_coverage <= 1.0:
        raise ValueError(f"min_coverage must lie in [0, 1], got {min_coverage}")
    if min_coverage == 0.0:
        return list(timelines)
    return [t for t in timelines if t.coverage >= min_coverage]


def write_timelines(timelines: Iterable[DayTimeline], fh: IO[str]) -> None:
    for t in timelines:
        fh.write(json.dumps(t.to_json(), sort_keys=True) + "\n")


def read_timelines(fh: IO[str]) -> list:
    return [DayTimeline.from_json(json.loads(line)) for line in fh if line.strip()]
