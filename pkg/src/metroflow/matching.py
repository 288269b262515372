"""Matching trips to train plans under the boarding/transfer/exit inequalities.

A passenger can board a train only if it departs at or after tap-in plus the
entry walk; a transfer connection needs a departure gap of at least the
transfer walk; the last train is the latest one whose arrival plus the exit
walk is at or before tap-out, and is unique under the exit-promptly
assumption.
"""

from __future__ import annotations

import enum
from typing import Optional, Sequence

import numpy as np

from . import _kernels as kernels
from .model import (
    DEFAULT_WAIT_CAP,
    LineId,
    Plan,
    Route,
    StationId,
    Timetable,
    Trip,
)
from .pathing import RouteSet
from .walktime import WalkTimeTable


class TripGroup(enum.Enum):
    NO_TRANSFER_ONE_ROUTE = "no-transfer-one-route"
    ONE_TRANSFER_ONE_ROUTE = "one-transfer-one-route"
    MULTI_TRANSFER_ONE_ROUTE = "multi-transfer-one-route"
    MULTI_ROUTES = "multi-routes"
    UNCLASSIFIABLE = "unclassifiable"


def feasible_boardings(
    x: Trip,
    leg: tuple[LineId, StationId],
    tab: Timetable,
    walk: WalkTimeTable,
    n_cap: int = DEFAULT_WAIT_CAP,
) -> list[str]:
    """Trains of the first leg the passenger could board, in departure order.

    The i-th returned train corresponds to waiting i trains; the list is
    truncated at the wait cap.
    """
    line, station = leg
    deps = tab.departures(line, station)
    start = int(np.searchsorted(deps, x.b + walk.ett(line, station), side="left"))
    stops = tab.stops_at(line, station)
    return [c.train_sq for c in stops[start:start + n_cap]]


def exit_train(
    x: Trip,
    leg: tuple[LineId, StationId],
    tab: Timetable,
    walk: WalkTimeTable,
) -> Optional[str]:
    """The unique latest train whose arrival leaves time for the exit walk."""
    line, station = leg
    arrs = tab.arrivals(line, station)
    pos = int(np.searchsorted(arrs, x.e - walk.ext(line, station), side="right")) - 1
    if pos < 0:
        return None
    return tab.stops_at(line, station)[pos].train_sq


def feasible_transfers(
    tr: str,
    station: StationId,
    from_line: LineId,
    to_line: LineId,
    tab: Timetable,
    walk: WalkTimeTable,
    n_cap: int = DEFAULT_WAIT_CAP,
) -> list[str]:
    """Connecting trains reachable from tr at a transfer station, in order."""
    stop = tab.stop_of(from_line, tr, station)
    if stop is None:
        return []
    deps = tab.departures(to_line, station)
    ready = stop.arr + walk.tft(from_line, to_line, station)
    start = int(np.searchsorted(deps, ready, side="left"))
    stops = tab.stops_at(to_line, station)
    return [c.train_sq for c in stops[start:start + n_cap]]


def enumerate_plans(
    x: Trip,
    route: Route,
    tab: Timetable,
    walk: WalkTimeTable,
    n_cap: int = DEFAULT_WAIT_CAP,
) -> list[Plan]:
    """All train combinations satisfying the feasibility conditions.

    Chains boardings through transfers using each train's own arrival times,
    and pins the last leg to the uniquely inferred exit train.  An empty list
    means the route is infeasible for this trip.
    """
    if route.origin != x.o or route.destination != x.d:
        raise ValueError(f"route {route.signature()} does not connect {x.o} -> {x.d}")
    legs = route.legs
    tables = [tab.leg_table(l.line, l.board, l.alight) for l in legs]
    if any(t.dep.size == 0 for t in tables):
        return []
    last = tables[-1]
    exit_pos = int(
        np.searchsorted(last.arr, x.e - walk.ext(legs[-1].line, legs[-1].alight), side="right")
    ) - 1
    if exit_pos < 0:
        return []
    t_entry = x.b + walk.ett(legs[0].line, legs[0].board)
    tfts = [
        walk.tft(legs[i - 1].line, legs[i].line, legs[i].board)
        for i in range(1, len(legs))
    ]
    trains_idx, waits = kernels.chain_plans(
        [t.dep for t in tables],
        [t.arr for t in tables],
        float(t_entry),
        np.asarray(tfts, dtype=np.float64),
        exit_pos,
        n_cap,
    )
    plans = []
    for row, wrow in zip(trains_idx, waits):
        plans.append(
            Plan(
                route=route,
                trains=tuple(tables[i].trains[row[i]] for i in range(len(legs))),
                waits=tuple(int(w) for w in wrow),
            )
        )
    return plans


def classify_trip(x: Trip, routes: RouteSet) -> TripGroup:
    """Estimation group of a trip, from its OD's effective route count."""
    entry = routes.get((x.o, x.d))
    if entry is None or not entry.routes:
        return TripGroup.UNCLASSIFIABLE
    if len(entry.routes) > 1:
        return TripGroup.MULTI_ROUTES
    transfers = entry.routes[0].transfers
    if transfers == 0:
        return TripGroup.NO_TRANSFER_ONE_ROUTE
    if transfers == 1:
        return TripGroup.ONE_TRANSFER_ONE_ROUTE
    return TripGroup.MULTI_TRANSFER_ONE_ROUTE


def plan_to_jsonl(x: Trip, route_index: int, plan: Plan) -> dict:
    """Debug record for the optional plan-dump JSONL."""
    return {
        "card_id": x.card_id,
        "origin": x.o,
        "destination": x.d,
        "route_index": route_index,
        "trains": list(plan.trains),
        "waits": list(plan.waits),
    }
