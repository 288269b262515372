"""Core domain types: network, timetable, trips, routes, plans, distributions.

All types are immutable after construction and safe to share read-only
across parallel workers.  Times are seconds since local midnight of the
service day; multi-day inputs must be partitioned by day upstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Optional, Sequence

import numpy as np

StationId = str
LineId = str

TAP_IN = 21
TAP_OUT = 22

DAY_S = 86400
DEFAULT_SLOT_MINUTES = 30
DEFAULT_WAIT_CAP = 5

DIST_TOL = 1e-9


class ConfigurationError(ValueError):
    """Bad parameters or an unusable input file."""


class InvariantError(ValueError):
    """A domain invariant does not hold for the given data."""


class OvertakingError(InvariantError):
    """Two trains of one line swap order between stations."""


class EstimationError(RuntimeError):
    """An estimator could not produce a result."""


# ---------------------------------------------------------------------------
# time slots

def slot_count(delta_min: int = DEFAULT_SLOT_MINUTES) -> int:
    if delta_min <= 0 or 1440 % delta_min != 0:
        raise ConfigurationError(f"slot width {delta_min} min does not divide 1440")
    return 1440 // delta_min


def slot_of(t_s: float, delta_min: int = DEFAULT_SLOT_MINUTES) -> int:
    """1-based index of the half-open slot containing a second-of-day."""
    n = slot_count(delta_min)
    if not 0 <= t_s < DAY_S:
        raise InvariantError(f"time {t_s} outside [0, 86400)")
    j = int(t_s // 60) // delta_min + 1
    assert 1 <= j <= n
    return j


@dataclass(frozen=True)
class TimeSlot:
    index: int
    delta_min: int = DEFAULT_SLOT_MINUTES

    def __post_init__(self) -> None:
        n = slot_count(self.delta_min)
        if not 1 <= self.index <= n:
            raise InvariantError(f"slot index {self.index} outside [1, {n}]")

    @property
    def start_s(self) -> int:
        return (self.index - 1) * self.delta_min * 60

    @property
    def end_s(self) -> int:
        return self.index * self.delta_min * 60


# ---------------------------------------------------------------------------
# network

class MetroNetwork:
    """Stations plus directed logical lines; the routing graph.

    A logical line is one direction of service on a physical line; transfer
    stations are the stations served by two or more physical lines.
    """

    def __init__(
        self,
        lines: dict[LineId, Sequence[StationId]],
        section_runtimes: dict[LineId, Sequence[float]],
        physical: Optional[dict[LineId, str]] = None,
    ):
        self.lines: dict[LineId, tuple[StationId, ...]] = {}
        self.section_runtimes: dict[LineId, tuple[float, ...]] = {}
        self.physical: dict[LineId, str] = {}
        for lid, stations in lines.items():
            stations = tuple(stations)
            if not lid:
                raise InvariantError("empty line id")
            if len(stations) < 2:
                raise InvariantError(f"line {lid} has fewer than 2 stations")
            if len(set(stations)) != len(stations):
                raise InvariantError(f"line {lid} repeats a station")
            if any(not s for s in stations):
                raise InvariantError(f"line {lid} has an empty station id")
            runtimes = tuple(float(r) for r in section_runtimes[lid])
            if len(runtimes) != len(stations) - 1:
                raise InvariantError(
                    f"line {lid}: {len(runtimes)} runtimes for {len(stations)} stations"
                )
            if any(r <= 0 for r in runtimes):
                raise InvariantError(f"line {lid} has a non-positive section runtime")
            self.lines[lid] = stations
            self.section_runtimes[lid] = runtimes
            self.physical[lid] = (physical or {}).get(lid, lid)

        self.stations: frozenset[StationId] = frozenset(
            s for seq in self.lines.values() for s in seq
        )
        by_station: dict[StationId, set[str]] = {}
        for lid, seq in self.lines.items():
            for s in seq:
                by_station.setdefault(s, set()).add(self.physical[lid])
        self.transfer_stations: frozenset[StationId] = frozenset(
            s for s, phys in by_station.items() if len(phys) >= 2
        )
        self._index: dict[LineId, dict[StationId, int]] = {
            lid: {s: i for i, s in enumerate(seq)} for lid, seq in self.lines.items()
        }

    def lines_serving(self, station: StationId) -> list[LineId]:
        return [lid for lid, seq in self.lines.items() if station in self._index[lid]]

    def index_on(self, line: LineId, station: StationId) -> int:
        return self._index[line][station]

    def runtime_between(self, line: LineId, board: StationId, alight: StationId) -> float:
        """Minimum on-train minutes from board to alight along the line."""
        i, j = self.index_on(line, board), self.index_on(line, alight)
        if i >= j:
            raise InvariantError(f"{board}->{alight} is not forward on line {line}")
        return sum(self.section_runtimes[line][i:j])

    def sections_between(
        self, line: LineId, board: StationId, alight: StationId
    ) -> list[tuple[StationId, StationId]]:
        i, j = self.index_on(line, board), self.index_on(line, alight)
        seq = self.lines[line]
        return [(seq[k], seq[k + 1]) for k in range(i, j)]


# ---------------------------------------------------------------------------
# timetable

@dataclass(frozen=True)
class TrainEvent:
    train_sq: str
    line: LineId
    station: StationId
    time: int  # seconds of day
    tag: str  # "arrive" | "leave"
    day: Optional[date] = None


@dataclass(frozen=True)
class PlatformStop:
    """One train calling at one (line, station): arrive and leave seconds."""

    train_sq: str
    arr: int
    dep: int


@dataclass(frozen=True)
class LegTable:
    """Trains usable on one route leg, sorted by departure at the board station."""

    dep: np.ndarray  # departure seconds at board
    arr: np.ndarray  # arrival seconds at alight, same train order
    trains: tuple[str, ...]


class Timetable:
    """Per-platform train calls with no-overtaking guaranteed.

    Within one (line, station) departures strictly increase across trains,
    and the train order is identical at every station of a line.
    """

    def __init__(self, stops: dict[tuple[LineId, StationId], list[PlatformStop]]):
        self._stops = {k: tuple(v) for k, v in stops.items()}
        self._dep_arrays: dict[tuple[LineId, StationId], np.ndarray] = {}
        self._arr_arrays: dict[tuple[LineId, StationId], np.ndarray] = {}
        self._by_train: dict[tuple[LineId, str], dict[StationId, PlatformStop]] = {}
        for (line, station), calls in self._stops.items():
            for c in calls:
                self._by_train.setdefault((line, c.train_sq), {})[station] = c
        self._leg_cache: dict[tuple[LineId, StationId, StationId], LegTable] = {}
        self._validate()

    @classmethod
    def from_events(cls, events: Iterable[TrainEvent]) -> "Timetable":
        """Pair arrive/leave events; a terminal arrival without a leave gets dep=arr."""
        acc: dict[tuple[LineId, str, StationId], dict[str, int]] = {}
        order: list[tuple[LineId, str, StationId]] = []
        for ev in events:
            key = (ev.line, ev.train_sq, ev.station)
            if key not in acc:
                acc[key] = {}
                order.append(key)
            acc[key][ev.tag] = ev.time
        stops: dict[tuple[LineId, StationId], list[PlatformStop]] = {}
        for line, train, station in order:
            times = acc[(line, train, station)]
            arr = times.get("arrive", times.get("leave"))
            dep = times.get("leave", arr)
            if arr is None:
                continue
            if dep < arr:
                raise InvariantError(
                    f"train {train} leaves {station} before arriving ({dep} < {arr})"
                )
            stops.setdefault((line, station), []).append(PlatformStop(train, arr, dep))
        for calls in stops.values():
            calls.sort(key=lambda c: (c.dep, c.arr, c.train_sq))
        return cls(stops)

    def _validate(self) -> None:
        for (line, station), calls in self._stops.items():
            for a, b in zip(calls, calls[1:]):
                if b.dep <= a.dep:
                    raise OvertakingError(
                        f"line {line} station {station}: trains {a.train_sq} and "
                        f"{b.train_sq} do not depart in strictly increasing order"
                    )
        # order consistency across stations of one line
        lines = {line for line, _ in self._stops}
        for line in lines:
            platforms = [calls for (l, _), calls in self._stops.items() if l == line]
            ref = max(platforms, key=len)
            rank = {c.train_sq: i for i, c in enumerate(ref)}
            for calls in platforms:
                ranked = [(c.train_sq, rank[c.train_sq]) for c in calls if c.train_sq in rank]
                for (ta, ra), (tb, rb) in zip(ranked, ranked[1:]):
                    if ra >= rb:
                        raise OvertakingError(
                            f"line {line}: train {tb} overtakes train {ta}"
                        )

    def platforms(self) -> list[tuple[LineId, StationId]]:
        return list(self._stops)

    def stops_at(self, line: LineId, station: StationId) -> tuple[PlatformStop, ...]:
        return self._stops.get((line, station), ())

    def departures(self, line: LineId, station: StationId) -> np.ndarray:
        key = (line, station)
        if key not in self._dep_arrays:
            self._dep_arrays[key] = np.array(
                [c.dep for c in self.stops_at(line, station)], dtype=np.float64
            )
        return self._dep_arrays[key]

    def arrivals(self, line: LineId, station: StationId) -> np.ndarray:
        key = (line, station)
        if key not in self._arr_arrays:
            self._arr_arrays[key] = np.array(
                [c.arr for c in self.stops_at(line, station)], dtype=np.float64
            )
        return self._arr_arrays[key]

    def stop_of(self, line: LineId, train_sq: str, station: StationId) -> Optional[PlatformStop]:
        return self._by_train.get((line, train_sq), {}).get(station)

    def trains_on(self, line: LineId) -> list[str]:
        seen = []
        for (l, t) in self._by_train:
            if l == line:
                seen.append(t)
        return seen

    def leg_table(self, line: LineId, board: StationId, alight: StationId) -> LegTable:
        """Trains with calls at both stations, ordered by departure at board."""
        key = (line, board, alight)
        table = self._leg_cache.get(key)
        if table is None:
            rows = []
            for c in self.stops_at(line, board):
                dest = self.stop_of(line, c.train_sq, alight)
                if dest is not None:
                    rows.append((c.dep, dest.arr, c.train_sq))
            table = LegTable(
                dep=np.array([r[0] for r in rows], dtype=np.float64),
                arr=np.array([r[1] for r in rows], dtype=np.float64),
                trains=tuple(r[2] for r in rows),
            )
            self._leg_cache[key] = table
        return table

    def to_events(self) -> list[TrainEvent]:
        events = []
        for (line, station), calls in sorted(self._stops.items()):
            for c in calls:
                events.append(TrainEvent(c.train_sq, line, station, c.arr, "arrive"))
                events.append(TrainEvent(c.train_sq, line, station, c.dep, "leave"))
        return events


# ---------------------------------------------------------------------------
# taps and trips

@dataclass(frozen=True)
class TapRecord:
    card_id: str
    station: StationId
    time: int  # seconds of day
    tag: int  # TAP_IN | TAP_OUT
    day: Optional[date] = None

    def __post_init__(self) -> None:
        if self.tag not in (TAP_IN, TAP_OUT):
            raise InvariantError(f"tap tag {self.tag} not in {{21, 22}}")


@dataclass(frozen=True)
class Trip:
    card_id: str
    b: int  # tap-in second
    o: StationId
    e: int  # tap-out second
    d: StationId

    def __post_init__(self) -> None:
        if self.b >= self.e:
            raise InvariantError(f"trip of {self.card_id}: b={self.b} not before e={self.e}")
        if self.o == self.d:
            raise InvariantError(f"trip of {self.card_id}: origin equals destination")

    @property
    def duration_s(self) -> int:
        return self.e - self.b


# ---------------------------------------------------------------------------
# routes and plans

@dataclass(frozen=True)
class Leg:
    line: LineId
    board: StationId
    alight: StationId

    def __post_init__(self) -> None:
        if self.board == self.alight:
            raise InvariantError(f"leg on {self.line} boards and alights at {self.board}")


@dataclass(frozen=True)
class Route:
    legs: tuple[Leg, ...]
    min_cost: float  # minutes: min walks + min running time

    def __post_init__(self) -> None:
        if not self.legs:
            raise InvariantError("route has no legs")
        for a, b in zip(self.legs, self.legs[1:]):
            if a.alight != b.board:
                raise InvariantError(f"legs {a} -> {b} do not share a station")

    @property
    def transfers(self) -> int:
        return len(self.legs) - 1

    @property
    def origin(self) -> StationId:
        return self.legs[0].board

    @property
    def destination(self) -> StationId:
        return self.legs[-1].alight

    def signature(self) -> str:
        return "|".join(f"{l.line}:{l.board}>{l.alight}" for l in self.legs)

    def validate_transfers(self, net: MetroNetwork) -> None:
        for a, b in zip(self.legs, self.legs[1:]):
            s = a.alight
            if s not in net.transfer_stations:
                raise InvariantError(f"route transfers at non-transfer station {s}")
            if net.physical[a.line] == net.physical[b.line]:
                raise InvariantError(f"route transfers {a.line}->{b.line} on one physical line")


@dataclass(frozen=True)
class Plan:
    route: Route
    trains: tuple[str, ...]
    waits: tuple[int, ...]

    def __post_init__(self) -> None:
        if not (len(self.trains) == len(self.waits) == len(self.route.legs)):
            raise InvariantError("plan trains/waits do not match route legs")
        if any(w < 1 for w in self.waits):
            raise InvariantError("plan wait count below 1")


# ---------------------------------------------------------------------------
# estimation keys and distributions

@dataclass(frozen=True)
class TapinKey:
    station: StationId
    line: LineId
    slot: int


@dataclass(frozen=True)
class TransferKey:
    station: StationId
    from_line: LineId
    to_line: LineId
    slot: int


def _check_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.size == 0:
        raise InvariantError("probability vector must be 1-D and non-empty")
    if (probs < 0).any():
        raise InvariantError("negative probability entry")
    if abs(float(probs.sum()) - 1.0) > DIST_TOL:
        raise InvariantError(f"probabilities sum to {probs.sum()!r}, not 1")
    probs.setflags(write=False)
    return probs


@dataclass(frozen=True)
class WaitDistribution:
    """P(number of trains waited = i) for i = 1..n."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", _check_probs(self.probs))

    @property
    def n(self) -> int:
        return int(self.probs.size)

    def mean(self) -> float:
        return float(np.arange(1, self.n + 1) @ self.probs)


@dataclass(frozen=True)
class RouteChoiceDistribution:
    od: tuple[StationId, StationId]
    slot: TimeSlot
    probs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", _check_probs(self.probs))
