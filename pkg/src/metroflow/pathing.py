"""Route enumeration: k shortest loopless routes per OD and the time-cost filter.

Routes are found on a platform-expanded graph (nodes are (station, line)
pairs) with deviation-path search, so every returned route is a simple path;
routes revisiting a station are discarded outright.  Costs are minutes:
minimum walks plus minimum train running time.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from typing import IO, Optional, Sequence

from .model import ConfigurationError, Leg, LineId, MetroNetwork, Route, StationId, Trip
from .walktime import WalkTimeTable

DEFAULT_K = 8
DEFAULT_Y_PERCENT = 2.0

_SRC = ("@src", "")
_SNK = ("@snk", "")

Node = tuple[str, str]


def route_min_cost(net: MetroNetwork, walk: WalkTimeTable, legs: Sequence[Leg]) -> float:
    """Minutes of minimal walking plus minimal running time, in leg order."""
    cost = walk.ett(legs[0].line, legs[0].board) / 60.0
    for i, leg in enumerate(legs):
        if i:
            cost += walk.tft(legs[i - 1].line, leg.line, leg.board) / 60.0
        cost += net.runtime_between(leg.line, leg.board, leg.alight)
    cost += walk.ext(legs[-1].line, legs[-1].alight) / 60.0
    return cost


def _platform_graph(net: MetroNetwork, walk: WalkTimeTable, o: StationId, d: StationId):
    adj: dict[Node, list[tuple[Node, float]]] = {}

    def edge(a: Node, b: Node, w: float) -> None:
        adj.setdefault(a, []).append((b, w))

    for line, seq in net.lines.items():
        runtimes = net.section_runtimes[line]
        for i in range(len(seq) - 1):
            edge((seq[i], line), (seq[i + 1], line), runtimes[i])
    for s in net.transfer_stations:
        serving = net.lines_serving(s)
        for la in serving:
            for lb in serving:
                if la != lb and net.physical[la] != net.physical[lb]:
                    edge((s, la), (s, lb), walk.tft(la, lb, s) / 60.0)
    for line in net.lines_serving(o):
        edge(_SRC, (o, line), walk.ett(line, o) / 60.0)
    for line in net.lines_serving(d):
        edge((d, line), _SNK, walk.ext(line, d) / 60.0)
    return adj


def _dijkstra(adj, src: Node, dst: Node, banned_nodes=frozenset(), banned_edges=frozenset()):
    """Shortest path avoiding banned nodes/edges; None when dst is unreachable."""
    heap: list[tuple[float, int, Node]] = [(0.0, 0, src)]
    parent: dict[Node, Optional[Node]] = {src: None}
    dist: dict[Node, float] = {src: 0.0}
    done: set[Node] = set()
    tick = 0
    while heap:
        cost, _, node = heapq.heappop(heap)
        if node in done:
            continue
        done.add(node)
        if node == dst:
            path = []
            cur: Optional[Node] = node
            while cur is not None:
                path.append(cur)
                cur = parent[cur]
            return cost, path[::-1]
        for nxt, w in adj.get(node, ()):
            if nxt in banned_nodes or nxt in done or (node, nxt) in banned_edges:
                continue
            nd = cost + w
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                parent[nxt] = node
                tick += 1
                heapq.heappush(heap, (nd, tick, nxt))
    return None


def _path_to_legs(path: Sequence[Node]) -> Optional[list[Leg]]:
    """Collapse a platform path into legs; None when any leg has zero length."""
    inner = path[1:-1]
    if not inner:
        return None
    legs: list[Leg] = []
    start = 0
    for i in range(1, len(inner) + 1):
        if i == len(inner) or inner[i][1] != inner[start][1]:
            if i - start < 2:
                return None  # entered a line without riding it
            legs.append(Leg(inner[start][1], inner[start][0], inner[i - 1][0]))
            start = i
    return legs


def _stations_looped(net: MetroNetwork, legs: Sequence[Leg]) -> bool:
    seen: set[StationId] = set()
    for i, leg in enumerate(legs):
        stations = net.lines[leg.line]
        a, b = net.index_on(leg.line, leg.board), net.index_on(leg.line, leg.alight)
        span = stations[a:b + 1] if i == 0 else stations[a + 1:b + 1]
        for s in span:
            if s in seen:
                return True
            seen.add(s)
    return False


def _route_sort_key(route: Route) -> tuple:
    return (
        route.min_cost,
        route.transfers,
        tuple(l.line for l in route.legs),
        route.signature(),
    )


def k_shortest_routes(
    net: MetroNetwork,
    o: StationId,
    d: StationId,
    k: int = DEFAULT_K,
    walk: Optional[WalkTimeTable] = None,
) -> list[Route]:
    """Up to k loopless routes from o to d, ascending by minimal time cost.

    Ties break toward fewer transfers, then lexicographic leg lines; the
    result for k is always a prefix of the result for any larger k.
    """
    if o == d:
        raise ConfigurationError("origin equals destination")
    if o not in net.stations or d not in net.stations:
        raise ConfigurationError(f"unknown station in OD ({o}, {d})")
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    walk = walk if walk is not None else WalkTimeTable()

    adj = _platform_graph(net, walk, o, d)
    first = _dijkstra(adj, _SRC, _SNK)
    if first is None:
        return []

    found_paths: list[tuple[float, tuple[Node, ...]]] = []
    seen_paths: set[tuple[Node, ...]] = set()
    candidates: list[tuple[float, tuple, tuple[Node, ...]]] = []

    def push(cost: float, path: Sequence[Node]) -> None:
        tpath = tuple(path)
        if tpath not in seen_paths:
            seen_paths.add(tpath)
            heapq.heappush(candidates, (cost, tpath, tpath))

    push(first[0], first[1])
    routes: list[Route] = []

    while candidates:
        if len(routes) >= k and candidates[0][0] > routes[k - 1].min_cost:
            # every remaining path is strictly costlier than the k-th route,
            # so the tie group at the boundary is complete
            break
        cost, _, path = heapq.heappop(candidates)
        found_paths.append((cost, path))
        legs = _path_to_legs(path)
        if legs is not None and not _stations_looped(net, legs):
            route = Route(tuple(legs), route_min_cost(net, walk, legs))
            routes.append(route)
            routes.sort(key=_route_sort_key)
        # spur generation (deviation paths)
        for i in range(1, len(path) - 1):
            spur = path[i]
            root = path[:i + 1]
            banned_edges = {
                (p[i], p[i + 1])
                for _, p in found_paths
                if len(p) > i + 1 and p[:i + 1] == root
            }
            banned_nodes = set(root[:-1])
            res = _dijkstra(adj, spur, _SNK, banned_nodes, banned_edges)
            if res is None:
                continue
            spur_cost, spur_path = res
            root_cost = cost_of_path(adj, root)
            push(root_cost + spur_cost, root[:-1] + tuple(spur_path))

    return routes[:k]


def cost_of_path(adj, path: Sequence[Node]) -> float:
    cost = 0.0
    for a, b in zip(path, path[1:]):
        for nxt, w in adj[a]:
            if nxt == b:
                cost += w
                break
        else:
            raise KeyError(f"no edge {a} -> {b}")
    return cost


def effective_routes(
    candidates: Sequence[Route], trips: Sequence[Trip], y: float = DEFAULT_Y_PERCENT
) -> tuple[list[Route], float]:
    """Drop candidate routes costlier than the observed time-cost ceiling.

    The top y% of trips by duration are treated as abnormal travellers; the
    ceiling C_max is the largest duration among the rest, in minutes.  With
    no trips there is no evidence and candidates pass through (C_max = inf).
    """
    if not 0 <= y < 100:
        raise ConfigurationError(f"Y={y} outside [0, 100)")
    if not trips:
        return list(candidates), math.inf
    durations = sorted(t.duration_s for t in trips)
    keep = math.ceil(len(durations) * (100.0 - y) / 100.0)
    c_max_min = durations[keep - 1] / 60.0
    return [r for r in candidates if r.min_cost <= c_max_min + 1e-9], c_max_min


# ---------------------------------------------------------------------------
# route sets

@dataclass
class RouteEntry:
    routes: list[Route]
    c_max_min: float = math.inf


@dataclass
class RouteSet:
    """Effective routes per OD pair."""

    entries: dict[tuple[StationId, StationId], RouteEntry] = field(default_factory=dict)

    def get(self, od: tuple[StationId, StationId]) -> Optional[RouteEntry]:
        return self.entries.get(od)

    def set(self, od: tuple[StationId, StationId], entry: RouteEntry) -> None:
        self.entries[od] = entry

    def ods(self) -> list[tuple[StationId, StationId]]:
        return sorted(self.entries)

    def to_json(self, stream: IO[str]) -> None:
        payload = {
            "ods": [
                {
                    "origin": o,
                    "destination": d,
                    "c_max_min": None if math.isinf(e.c_max_min) else e.c_max_min,
                    "routes": [
                        {
                            "legs": [
                                {"line": l.line, "board": l.board, "alight": l.alight}
                                for l in r.legs
                            ],
                            "min_cost_min": r.min_cost,
                        }
                        for r in e.routes
                    ],
                }
                for (o, d), e in sorted(self.entries.items())
            ]
        }
        json.dump(payload, stream, indent=2)
        stream.write("\n")

    @classmethod
    def from_json(cls, stream: IO[str]) -> "RouteSet":
        payload = json.load(stream)
        rs = cls()
        for od in payload["ods"]:
            routes = [
                Route(
                    tuple(Leg(l["line"], l["board"], l["alight"]) for l in r["legs"]),
                    float(r["min_cost_min"]),
                )
                for r in od["routes"]
            ]
            c_max = od.get("c_max_min")
            rs.set(
                (od["origin"], od["destination"]),
                RouteEntry(routes, math.inf if c_max is None else float(c_max)),
            )
        return rs


def compute_route_sets(
    net: MetroNetwork,
    trips: Sequence[Trip],
    k: int = DEFAULT_K,
    y: float = DEFAULT_Y_PERCENT,
    walk: Optional[WalkTimeTable] = None,
) -> RouteSet:
    """Effective route sets for every OD present in the trips."""
    by_od: dict[tuple[StationId, StationId], list[Trip]] = {}
    for t in trips:
        by_od.setdefault((t.o, t.d), []).append(t)
    rs = RouteSet()
    for od, od_trips in sorted(by_od.items()):
        if od[0] not in net.stations or od[1] not in net.stations:
            rs.set(od, RouteEntry([], math.inf))
            continue
        candidates = k_shortest_routes(net, od[0], od[1], k, walk)
        kept, c_max = effective_routes(candidates, od_trips, y)
        rs.set(od, RouteEntry(kept, c_max))
    return rs


# ---------------------------------------------------------------------------
# network file

def load_network(stream: IO[str]) -> MetroNetwork:
    """Network JSON: {"lines": [{"id", "stations", "runtimes_min", "physical"?}]}."""
    payload = json.load(stream)
    lines: dict[LineId, list[StationId]] = {}
    runtimes: dict[LineId, list[float]] = {}
    physical: dict[LineId, str] = {}
    for entry in payload["lines"]:
        lid = entry["id"]
        lines[lid] = list(entry["stations"])
        runtimes[lid] = [float(x) for x in entry["runtimes_min"]]
        physical[lid] = entry.get("physical", lid)
    return MetroNetwork(lines, runtimes, physical)


def save_network(net: MetroNetwork, stream: IO[str]) -> None:
    payload = {
        "lines": [
            {
                "id": lid,
                "physical": net.physical[lid],
                "stations": list(net.lines[lid]),
                "runtimes_min": list(net.section_runtimes[lid]),
            }
            for lid in net.lines
        ]
    }
    json.dump(payload, stream, indent=2)
    stream.write("\n")
