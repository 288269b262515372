"""Minimal walking times between gates and platforms, and between platforms.

Estimated from unambiguous trips: non-transfer single-route trips identify
the entry/exit walks, one-transfer single-route trips then identify the
platform-to-platform walks.  Operators may bypass estimation with a CSV
(`kind,line,line2,station,seconds`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import IO, TYPE_CHECKING, Optional

import numpy as np

from .model import ConfigurationError, LineId, StationId, Timetable, Trip

if TYPE_CHECKING:
    from .pathing import RouteSet

log = logging.getLogger(__name__)

DEFAULT_ETT_S = 120.0
DEFAULT_EXT_S = 120.0
DEFAULT_TFT_S = 180.0
WALK_CAP_S = 900.0
DEFAULT_PERCENTILE = 5.0


@dataclass
class WalkTimeTable:
    """Per-cell minimal walk seconds with global defaults for missing cells."""

    ett_cells: dict[tuple[LineId, StationId], float] = field(default_factory=dict)
    ext_cells: dict[tuple[LineId, StationId], float] = field(default_factory=dict)
    tft_cells: dict[tuple[LineId, LineId, StationId], float] = field(default_factory=dict)
    ett_default: float = DEFAULT_ETT_S
    ext_default: float = DEFAULT_EXT_S
    tft_default: float = DEFAULT_TFT_S

    def ett(self, line: LineId, station: StationId) -> float:
        return self.ett_cells.get((line, station), self.ett_default)

    def ext(self, line: LineId, station: StationId) -> float:
        return self.ext_cells.get((line, station), self.ext_default)

    def tft(self, from_line: LineId, to_line: LineId, station: StationId) -> float:
        return self.tft_cells.get((from_line, to_line, station), self.tft_default)

    def set_ett(self, line: LineId, station: StationId, seconds: float) -> None:
        self.ett_cells[(line, station)] = _clamp(seconds, f"ETT {line}/{station}")

    def set_ext(self, line: LineId, station: StationId, seconds: float) -> None:
        self.ext_cells[(line, station)] = _clamp(seconds, f"EXT {line}/{station}")

    def set_tft(self, from_line: LineId, to_line: LineId, station: StationId, seconds: float) -> None:
        self.tft_cells[(from_line, to_line, station)] = _clamp(
            seconds, f"TFT {from_line}/{to_line}/{station}"
        )

    def write_csv(self, stream: IO[str]) -> None:
        stream.write("kind,line,line2,station,seconds\n")
        for (line, station), s in sorted(self.ett_cells.items()):
            stream.write(f"ett,{line},,{station},{s:g}\n")
        for (line, station), s in sorted(self.ext_cells.items()):
            stream.write(f"ext,{line},,{station},{s:g}\n")
        for (l1, l2, station), s in sorted(self.tft_cells.items()):
            stream.write(f"tft,{l1},{l2},{station},{s:g}\n")

    @classmethod
    def read_csv(cls, stream: IO[str], **defaults: float) -> "WalkTimeTable":
        table = cls(**defaults)
        for lineno, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line or (lineno == 1 and line.lower().startswith("kind,")):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 5:
                raise ConfigurationError(f"walk-time CSV line {lineno}: expected 5 fields")
            kind, l1, l2, station, seconds = parts
            try:
                value = float(seconds)
            except ValueError:
                raise ConfigurationError(f"walk-time CSV line {lineno}: bad seconds {seconds!r}")
            if kind == "ett":
                table.set_ett(l1, station, value)
            elif kind == "ext":
                table.set_ext(l1, station, value)
            elif kind == "tft":
                table.set_tft(l1, l2, station, value)
            else:
                raise ConfigurationError(f"walk-time CSV line {lineno}: unknown kind {kind!r}")
        return table


def _clamp(seconds: float, label: str) -> float:
    if seconds < 0:
        log.warning("%s estimated below 0 (%.1f s); clamped", label, seconds)
        return 0.0
    if seconds > WALK_CAP_S:
        log.warning("%s estimated above %.0f s (%.1f s); clamped", label, WALK_CAP_S, seconds)
        return WALK_CAP_S
    return float(seconds)


def _latest_consistent(table_dep, table_arr, b: float, e: float) -> int:
    """Index of the latest train departing at/after b and arriving by e; -1 if none."""
    pos = int(np.searchsorted(table_arr, e, side="right")) - 1
    if pos < 0 or table_dep[pos] < b:
        return -1
    return pos


def estimate_ett_ext(
    trips: list[Trip],
    routes: "RouteSet",
    tab: Timetable,
    percentile: float = DEFAULT_PERCENTILE,
    table: Optional[WalkTimeTable] = None,
) -> WalkTimeTable:
    """Entry/exit walk minima from non-transfer trips with a single route.

    Each qualifying trip bounds the walk by the gate-to-departure and
    arrival-to-gate gaps of the latest train consistent with its taps; the
    low percentile of those bounds is a robust minimum.
    """
    table = table if table is not None else WalkTimeTable()
    ett_samples: dict[tuple[LineId, StationId], list[float]] = {}
    ext_samples: dict[tuple[LineId, StationId], list[float]] = {}
    qualifying = 0
    for trip in trips:
        entry = routes.get((trip.o, trip.d))
        if entry is None or len(entry.routes) != 1 or entry.routes[0].transfers != 0:
            continue
        leg = entry.routes[0].legs[0]
        lt = tab.leg_table(leg.line, leg.board, leg.alight)
        pos = _latest_consistent(lt.dep, lt.arr, trip.b, trip.e)
        if pos < 0:
            continue
        qualifying += 1
        ett_samples.setdefault((leg.line, leg.board), []).append(
            max(0.0, float(lt.dep[pos]) - trip.b)
        )
        ext_samples.setdefault((leg.line, leg.alight), []).append(
            max(0.0, trip.e - float(lt.arr[pos]))
        )
    if qualifying == 0:
        raise ConfigurationError(
            "no single-route non-transfer trips usable for walk-time estimation; "
            "supply a walk-time CSV instead"
        )
    for key, samples in ett_samples.items():
        table.set_ett(*key, float(np.percentile(samples, percentile)))
    for key, samples in ext_samples.items():
        table.set_ext(*key, float(np.percentile(samples, percentile)))
    return table


def estimate_tft(
    trips: list[Trip],
    routes: "RouteSet",
    tab: Timetable,
    walk: WalkTimeTable,
    percentile: float = DEFAULT_PERCENTILE,
) -> WalkTimeTable:
    """Transfer walk minima from one-transfer trips with a single route.

    Requires entry/exit walks already estimated (they pin down the boarded
    trains).  Per trip the widest feasible transfer gap is a certain upper
    bound on the walk; its low percentile approaches the minimum.
    """
    tft_samples: dict[tuple[LineId, LineId, StationId], list[float]] = {}
    for trip in trips:
        entry = routes.get((trip.o, trip.d))
        if entry is None or len(entry.routes) != 1 or entry.routes[0].transfers != 1:
            continue
        first, second = entry.routes[0].legs
        lt2 = tab.leg_table(second.line, second.board, second.alight)
        pos2 = _latest_consistent(lt2.dep, lt2.arr, trip.b, trip.e - walk.ext(second.line, second.alight))
        if pos2 < 0:
            continue
        lt1 = tab.leg_table(first.line, first.board, first.alight)
        pos1 = int(np.searchsorted(lt1.dep, trip.b + walk.ett(first.line, first.board), side="left"))
        if pos1 >= lt1.dep.size:
            continue
        gap = float(lt2.dep[pos2]) - float(lt1.arr[pos1])
        if gap < 0:
            continue
        tft_samples.setdefault((first.line, second.line, second.board), []).append(gap)
    for key, samples in tft_samples.items():
        walk.set_tft(*key, float(np.percentile(samples, percentile)))
    return walk


def estimate_walk_times(
    trips: list[Trip],
    routes: "RouteSet",
    tab: Timetable,
    percentile: float = DEFAULT_PERCENTILE,
) -> WalkTimeTable:
    """Full two-stage estimation: entry/exit walks first, then transfers."""
    table = estimate_ett_ext(trips, routes, tab, percentile)
    return estimate_tft(trips, routes, tab, table, percentile)
