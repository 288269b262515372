"""Parsing and cleaning of tap records and train operation logs.

Input CSVs are UTF-8 with ISO-8601 timestamps (bare HH:MM:SS also accepted).
Every drop reason is counted in a CleaningReport that can be emitted as JSON.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import IO, Iterable, Optional

from .model import (
    TAP_IN,
    TAP_OUT,
    ConfigurationError,
    InvariantError,
    TapRecord,
    Timetable,
    TrainEvent,
    Trip,
)

MAX_TRIP_DURATION_S = 4 * 3600

_TRAIN_TAGS = {1: "arrive", 2: "leave"}


@dataclass
class CleaningReport:
    """Counts of rows kept and of every drop reason."""

    counts: Counter = field(default_factory=Counter)

    def add(self, reason: str, n: int = 1) -> None:
        self.counts[reason] += n

    def get(self, reason: str) -> int:
        return self.counts.get(reason, 0)

    def to_json(self) -> str:
        return json.dumps(dict(sorted(self.counts.items())), indent=2)


def parse_timestamp(text: str) -> tuple[int, Optional[date]]:
    """Seconds since midnight plus the calendar day when one is given."""
    text = text.strip()
    try:
        dt = datetime.fromisoformat(text)
        return dt.hour * 3600 + dt.minute * 60 + dt.second, dt.date()
    except ValueError:
        pass
    parts = text.split(":")
    if len(parts) in (2, 3):
        try:
            h, m = int(parts[0]), int(parts[1])
            s = int(parts[2]) if len(parts) == 3 else 0
        except ValueError:
            raise ValueError(f"unparsable time {text!r}") from None
        if 0 <= h < 24 and 0 <= m < 60 and 0 <= s < 60:
            return h * 3600 + m * 60 + s, None
    raise ValueError(f"unparsable time {text!r}")


def format_timestamp(time_s: int, day: Optional[date]) -> str:
    h, rem = divmod(time_s, 3600)
    m, s = divmod(rem, 60)
    clock = f"{h:02d}:{m:02d}:{s:02d}"
    return f"{day.isoformat()}T{clock}" if day is not None else clock


def _is_header(line: str, first_field: str) -> bool:
    return line.split(",")[0].strip().lower() == first_field


# ---------------------------------------------------------------------------
# tap records

def parse_tap_records(stream: IO[str]) -> tuple[list[TapRecord], CleaningReport]:
    """Parse `card_id,station,time,tag` rows; drop and count malformed ones.

    Raises ConfigurationError when more than half of the data rows are
    malformed, which almost always means the wrong file was supplied.
    """
    report = CleaningReport()
    records: list[TapRecord] = []
    total = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if lineno == 1 and _is_header(line, "card_id"):
            continue
        total += 1
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4 or not parts[0] or not parts[1]:
            report.add("tap_malformed_row")
            continue
        card_id, station, time_text, tag_text = parts
        try:
            time_s, day = parse_timestamp(time_text)
        except ValueError:
            report.add("tap_malformed_row")
            continue
        try:
            tag = int(tag_text)
        except ValueError:
            report.add("tap_malformed_row")
            continue
        if tag not in (TAP_IN, TAP_OUT):
            report.add("tap_bad_tag")
            continue
        records.append(TapRecord(card_id, station, time_s, tag, day))
    bad = report.get("tap_malformed_row") + report.get("tap_bad_tag")
    if total > 0 and bad * 2 > total:
        raise ConfigurationError(
            f"{bad}/{total} tap rows malformed; this does not look like a tap-record file"
        )
    report.add("tap_rows_ok", len(records))
    records.sort(key=lambda r: (r.card_id, r.day or date.min, r.time, r.tag))
    return records, report


def write_tap_records(records: Iterable[TapRecord], stream: IO[str]) -> None:
    for r in records:
        stream.write(f"{r.card_id},{r.station},{format_timestamp(r.time, r.day)},{r.tag}\n")


def reconstruct_trips(
    records: list[TapRecord], report: Optional[CleaningReport] = None
) -> tuple[list[Trip], CleaningReport]:
    """Pair each tap-in with the next tap-out of the same card and day.

    Unpaired taps, same-station pairs, non-positive durations and trips over
    four hours are errant data: dropped and counted.  Input must be sorted by
    (card_id, time), as parse_tap_records returns it.
    """
    report = report if report is not None else CleaningReport()
    trips: list[Trip] = []
    pending: Optional[TapRecord] = None

    def flush_pending(reason: str) -> None:
        nonlocal pending
        if pending is not None:
            report.add(reason)
            pending = None

    prev_card: Optional[str] = None
    for rec in records:
        if rec.card_id != prev_card:
            flush_pending("trip_unpaired_tap_in")
            prev_card = rec.card_id
        if rec.tag == TAP_IN:
            flush_pending("trip_unpaired_tap_in")
            pending = rec
            continue
        # tap-out
        if pending is None:
            report.add("trip_unpaired_tap_out")
            continue
        if pending.day != rec.day:
            flush_pending("trip_unpaired_tap_in")
            report.add("trip_unpaired_tap_out")
            continue
        if rec.station == pending.station:
            report.add("trip_same_station")
            pending = None
            continue
        if rec.time <= pending.time:
            report.add("trip_nonpositive_duration")
            pending = None
            continue
        if rec.time - pending.time > MAX_TRIP_DURATION_S:
            report.add("trip_overlong")
            pending = None
            continue
        trips.append(Trip(pending.card_id, pending.time, pending.station, rec.time, rec.station))
        pending = None
    flush_pending("trip_unpaired_tap_in")
    report.add("trips_ok", len(trips))
    return trips, report


# ---------------------------------------------------------------------------
# train events

def parse_train_events(stream: IO[str]) -> tuple[Timetable, CleaningReport]:
    """Parse `train_sq,line,station,time,tag` rows (tag 1=arrive, 2=leave).

    Builds a Timetable; inconsistent train orders raise OvertakingError with
    the offending train pair named.
    """
    report = CleaningReport()
    events: list[TrainEvent] = []
    total = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if lineno == 1 and _is_header(line, "train_sq"):
            continue
        total += 1
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 5 or not parts[0] or not parts[1] or not parts[2]:
            report.add("train_malformed_row")
            continue
        train_sq, line_id, station, time_text, tag_text = parts
        try:
            time_s, day = parse_timestamp(time_text)
            tag = _TRAIN_TAGS[int(tag_text)]
        except (ValueError, KeyError):
            report.add("train_malformed_row")
            continue
        events.append(TrainEvent(train_sq, line_id, station, time_s, tag, day))
    bad = report.get("train_malformed_row")
    if total > 0 and bad * 2 > total:
        raise ConfigurationError(
            f"{bad}/{total} train rows malformed; this does not look like an operation log"
        )
    report.add("train_rows_ok", len(events))
    # drop (train, station) pairs whose leave precedes their arrival
    keyed: dict[tuple[str, str, str], dict[str, int]] = {}
    order: list[tuple[str, str, str]] = []
    for ev in events:
        key = (ev.line, ev.train_sq, ev.station)
        if key not in keyed:
            keyed[key] = {}
            order.append(key)
        keyed[key][ev.tag] = ev.time
    clean: list[TrainEvent] = []
    for line_id, train, station in order:
        times = keyed[(line_id, train, station)]
        if "arrive" in times and "leave" in times and times["leave"] < times["arrive"]:
            report.add("train_negative_dwell_pair")
            continue
        for tag, t in times.items():
            clean.append(TrainEvent(train, line_id, station, t, tag))
    table = Timetable.from_events(clean)
    return table, report


def write_train_events(table: Timetable, stream: IO[str], day: Optional[date] = None) -> None:
    tag_code = {"arrive": 1, "leave": 2}
    for ev in table.to_events():
        stream.write(
            f"{ev.train_sq},{ev.line},{ev.station},"
            f"{format_timestamp(ev.time, day if day is not None else ev.day)},{tag_code[ev.tag]}\n"
        )
