"""Synthetic data generator: the ground-truth oracle for the whole pipeline.

Inverts the estimation model: passengers sample a route, origin and transfer
waits from known distributions; tap times are derived from the boarded
trains' events plus walk minima and non-negative jitter.  Output is
deterministic for a given seed, and every generated plan is feasible under
the matching rules by construction.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from typing import IO, Optional, Sequence

import numpy as np

from .ingest import parse_timestamp
from .model import (
    DAY_S,
    ConfigurationError,
    LineId,
    MetroNetwork,
    PlatformStop,
    Route,
    StationId,
    TapRecord,
    Timetable,
    TAP_IN,
    TAP_OUT,
    slot_of,
)
from .pathing import k_shortest_routes, load_network
from .walktime import WalkTimeTable

MAX_ATTEMPTS_PER_PASSENGER = 80
RESAMPLE_BUDGET = 0.10


def generate_timetable(
    net: MetroNetwork,
    headway_min,
    span: tuple[int, int],
    dwell_s: int = 30,
) -> Timetable:
    """Dispatch trains at a fixed headway per line over the span.

    headway_min is minutes, either a scalar or a per-line mapping.  The last
    station gets leave == arrive (trains terminate).
    """
    start, end = span
    stops: dict[tuple[LineId, StationId], list[PlatformStop]] = {}
    for line, stations in net.lines.items():
        h = headway_min[line] if isinstance(headway_min, dict) else headway_min
        headway_s = int(round(float(h) * 60))
        if headway_s <= 0:
            raise ConfigurationError(f"non-positive headway for line {line}")
        runtimes = [int(round(r * 60)) for r in net.section_runtimes[line]]
        run_s = sum(runtimes) + dwell_s * (len(stations) - 1)
        if end - start < run_s:
            raise ConfigurationError(
                f"service span {end - start}s shorter than one full run ({run_s}s) on {line}"
            )
        seq = 0
        t0 = start
        while t0 < end:
            train = f"{line}-{seq:03d}"
            t = t0
            for i, station in enumerate(stations):
                arr = t
                last = i == len(stations) - 1
                dep = arr if last else arr + dwell_s
                stops.setdefault((line, station), []).append(PlatformStop(train, arr, dep))
                if not last:
                    t = dep + runtimes[i]
            seq += 1
            t0 += headway_s
    for calls in stops.values():
        calls.sort(key=lambda c: (c.dep, c.arr, c.train_sq))
    return Timetable(stops)


# ---------------------------------------------------------------------------
# scenario configuration

@dataclass
class KeyedDists:
    """A default distribution plus per-key overrides."""

    default: np.ndarray
    keys: dict[tuple, np.ndarray] = field(default_factory=dict)

    def get(self, key: tuple) -> np.ndarray:
        return self.keys.get(key, self.default)


@dataclass
class DemandSpec:
    origin: StationId
    destination: StationId
    passengers: int
    slots: list[int]
    alpha: Optional[dict] = None  # {"default": [...]} and/or {"slot:17": [...]}

    def alpha_for(self, slot: int, n_routes: int) -> np.ndarray:
        if self.alpha is None:
            if n_routes != 1:
                raise ConfigurationError(
                    f"OD ({self.origin}, {self.destination}) has {n_routes} routes "
                    "but no alpha in the scenario"
                )
            return np.array([1.0])
        probs = self.alpha.get(str(slot), self.alpha.get("default"))
        if probs is None:
            raise ConfigurationError(f"no alpha for slot {slot} on ({self.origin}, {self.destination})")
        arr = np.asarray(probs, dtype=np.float64)
        if arr.size != n_routes:
            raise ConfigurationError(
                f"alpha length {arr.size} != route count {n_routes} for "
                f"({self.origin}, {self.destination})"
            )
        return arr


@dataclass
class ScenarioConfig:
    name: str
    net: MetroNetwork
    walk: WalkTimeTable
    headways_min: dict[LineId, float]
    service_span: tuple[int, int]
    demand: list[DemandSpec]
    theta: KeyedDists
    beta: KeyedDists
    day: date = date(2015, 6, 1)
    delta_min: int = 30
    n_cap: int = 5
    dwell_s: int = 30
    jitter_mean_s: float = 30.0
    k: int = 8

    @classmethod
    def from_json(cls, stream: IO[str]) -> "ScenarioConfig":
        payload = json.load(stream)
        net = _net_from_payload(payload["network"])
        walk_cfg = payload.get("walk", {})
        walk = WalkTimeTable(
            ett_default=float(walk_cfg.get("ett_s", 120)),
            ext_default=float(walk_cfg.get("ext_s", 120)),
            tft_default=float(walk_cfg.get("tft_s", 180)),
        )
        for cell in walk_cfg.get("cells", []):
            kind = cell["kind"]
            if kind == "ett":
                walk.set_ett(cell["line"], cell["station"], float(cell["seconds"]))
            elif kind == "ext":
                walk.set_ext(cell["line"], cell["station"], float(cell["seconds"]))
            elif kind == "tft":
                walk.set_tft(cell["line"], cell["line2"], cell["station"], float(cell["seconds"]))
            else:
                raise ConfigurationError(f"unknown walk cell kind {kind!r}")
        start, _ = parse_timestamp(payload["service"]["start"])
        end, _ = parse_timestamp(payload["service"]["end"])
        demand = [
            DemandSpec(
                origin=d["origin"],
                destination=d["destination"],
                passengers=int(d["passengers"]),
                slots=[int(s) for s in d["slots"]],
                alpha=d.get("alpha"),
            )
            for d in payload["demand"]
        ]
        return cls(
            name=payload.get("name", "scenario"),
            net=net,
            walk=walk,
            headways_min={l: float(h) / 60.0 for l, h in payload["headways_s"].items()},
            service_span=(start, end),
            demand=demand,
            theta=_keyed_dists(payload["theta"], 3),
            beta=_keyed_dists(payload.get("beta", {"default": [1.0]}), 4),
            day=date.fromisoformat(payload.get("day", "2015-06-01")),
            delta_min=int(payload.get("delta_minutes", 30)),
            n_cap=int(payload.get("wait_cap", 5)),
            dwell_s=int(payload.get("dwell_s", 30)),
            jitter_mean_s=float(payload.get("jitter_mean_s", 30.0)),
            k=int(payload.get("k", 8)),
        )


def _net_from_payload(payload: dict) -> MetroNetwork:
    lines = {e["id"]: list(e["stations"]) for e in payload["lines"]}
    runtimes = {e["id"]: [float(x) for x in e["runtimes_min"]] for e in payload["lines"]}
    physical = {e["id"]: e.get("physical", e["id"]) for e in payload["lines"]}
    return MetroNetwork(lines, runtimes, physical)


def _keyed_dists(payload: dict, key_parts: int) -> KeyedDists:
    default = _checked_probs(payload["default"])
    keys = {}
    for text, probs in payload.get("keys", {}).items():
        parts = text.split("|")
        if len(parts) != key_parts:
            raise ConfigurationError(f"bad distribution key {text!r}")
        parts[-1] = int(parts[-1])  # slot index
        keys[tuple(parts)] = _checked_probs(probs)
    return KeyedDists(default, keys)


def _checked_probs(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if (arr < 0).any() or abs(arr.sum() - 1.0) > 1e-9:
        raise ConfigurationError(f"distribution {values!r} is not a probability vector")
    return arr


# ---------------------------------------------------------------------------
# trip generation

@dataclass
class TruthRecord:
    card_id: str
    origin: StationId
    destination: StationId
    slot: int
    route_index: int
    route_signature: str
    trains: list[str]
    waits: list[int]
    b: int
    e: int

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


@dataclass
class SimResult:
    scenario: ScenarioConfig
    timetable: Timetable
    taps: list[TapRecord]
    truth: list[TruthRecord]
    routes_by_od: dict[tuple[StationId, StationId], list[Route]]
    counters: Counter


def generate_trips(scenario: ScenarioConfig, seed: int) -> SimResult:
    """Sample synthetic passengers and derive their tap records.

    Deterministic for a given seed.  A sampled plan that cannot be realized
    under the timetable (waits past the service span, tap before midnight)
    is resampled and counted; more than 10% resamples fails the scenario.
    """
    net, walk = scenario.net, scenario.walk
    tab = generate_timetable(
        net, scenario.headways_min, scenario.service_span, scenario.dwell_s
    )
    routes_by_od: dict[tuple[StationId, StationId], list[Route]] = {}
    for spec in scenario.demand:
        od = (spec.origin, spec.destination)
        if od not in routes_by_od:
            routes_by_od[od] = k_shortest_routes(net, od[0], od[1], scenario.k, walk)
            if not routes_by_od[od]:
                raise ConfigurationError(f"no route for demand OD {od}")

    rng = np.random.default_rng(seed)
    taps: list[TapRecord] = []
    truth: list[TruthRecord] = []
    counters: Counter = Counter()
    slot_width = scenario.delta_min * 60
    pax_index = 0

    for spec in scenario.demand:
        routes = routes_by_od[(spec.origin, spec.destination)]
        for slot in spec.slots:
            alpha = spec.alpha_for(slot, len(routes))
            for _ in range(spec.passengers):
                card = f"P{pax_index:07d}"
                pax_index += 1
                rec = None
                for _attempt in range(MAX_ATTEMPTS_PER_PASSENGER):
                    rec = _sample_passenger(
                        card, spec, slot, slot_width, routes, alpha, scenario, tab, rng
                    )
                    if rec is not None:
                        break
                    counters["resamples"] += 1
                if rec is None:
                    raise ConfigurationError(
                        f"could not realize a trip for {card} on "
                        f"({spec.origin}, {spec.destination}) slot {slot}"
                    )
                truth.append(rec)
                taps.append(TapRecord(card, spec.origin, rec.b, TAP_IN, scenario.day))
                taps.append(TapRecord(card, spec.destination, rec.e, TAP_OUT, scenario.day))
                counters["passengers"] += 1

    if counters["resamples"] > RESAMPLE_BUDGET * max(counters["passengers"], 1):
        raise ConfigurationError(
            f"{counters['resamples']} resamples for {counters['passengers']} passengers; "
            "the scenario demand does not fit its timetable"
        )
    return SimResult(scenario, tab, taps, truth, routes_by_od, counters)


def _sample_passenger(
    card: str,
    spec: DemandSpec,
    slot: int,
    slot_width: int,
    routes: Sequence[Route],
    alpha: np.ndarray,
    scenario: ScenarioConfig,
    tab: Timetable,
    rng: np.random.Generator,
) -> Optional[TruthRecord]:
    net, walk = scenario.net, scenario.walk
    z = int(rng.choice(alpha.size, p=alpha))
    route = routes[z]
    legs = route.legs
    gate = (slot - 1) * slot_width + int(rng.integers(0, slot_width))

    # first leg: anchor at the first boardable train, then wait w1 trains
    first = legs[0]
    lt = tab.leg_table(first.line, first.board, first.alight)
    ett = int(round(walk.ett(first.line, first.board)))
    anchor = int(np.searchsorted(lt.dep, gate + ett, side="left"))
    if anchor >= lt.dep.size:
        return None
    theta = scenario.theta.get((first.board, first.line, slot))
    w1 = 1 + int(rng.choice(theta.size, p=theta))
    if w1 > scenario.n_cap or anchor + w1 - 1 >= lt.dep.size:
        return None
    jitter = _jitter(rng, scenario.jitter_mean_s)
    if anchor > 0:
        gap = int(lt.dep[anchor]) - int(lt.dep[anchor - 1])
        jitter = min(jitter, gap - 1)
    b = int(lt.dep[anchor]) - ett - jitter
    if b < 0 or slot_of(b, scenario.delta_min) != slot:
        return None

    trains = [anchor + w1 - 1]
    waits = [w1]
    tables = [lt]
    for i in range(1, len(legs)):
        prev_arr = int(tables[i - 1].arr[trains[i - 1]])
        leg = legs[i]
        lt_i = tab.leg_table(leg.line, leg.board, leg.alight)
        tft = int(round(walk.tft(legs[i - 1].line, leg.line, leg.board)))
        start = int(np.searchsorted(lt_i.dep, prev_arr + tft, side="left"))
        beta = scenario.beta.get((leg.board, legs[i - 1].line, leg.line, slot))
        w = 1 + int(rng.choice(beta.size, p=beta))
        if w > scenario.n_cap or start + w - 1 >= lt_i.dep.size:
            return None
        trains.append(start + w - 1)
        waits.append(w)
        tables.append(lt_i)

    last_idx = trains[-1]
    last_table = tables[-1]
    arr = int(last_table.arr[last_idx])
    ext = int(round(walk.ext(legs[-1].line, legs[-1].alight)))
    exit_jitter = _jitter(rng, scenario.jitter_mean_s)
    if last_idx + 1 < last_table.arr.size:
        # keep the exit-promptly assumption exact: the boarded train must
        # stay the latest arrival compatible with the tap-out
        exit_jitter = min(exit_jitter, int(last_table.arr[last_idx + 1]) - arr - 1)
    e = arr + ext + exit_jitter
    if e >= DAY_S:
        return None

    return TruthRecord(
        card_id=card,
        origin=spec.origin,
        destination=spec.destination,
        slot=slot,
        route_index=z,
        route_signature=route.signature(),
        trains=[tables[i].trains[trains[i]] for i in range(len(legs))],
        waits=waits,
        b=b,
        e=e,
    )


def _jitter(rng: np.random.Generator, mean_s: float) -> int:
    if mean_s <= 0:
        return 0
    return int(rng.exponential(mean_s))


# ---------------------------------------------------------------------------
# truth metadata for scoring

def truth_meta(result: SimResult, seed: int) -> dict:
    sc = result.scenario
    ods = []
    for spec in sc.demand:
        od = (spec.origin, spec.destination)
        routes = result.routes_by_od[od]
        entry = {
            "origin": spec.origin,
            "destination": spec.destination,
            "routes": [r.signature() for r in routes],
            "alpha": {
                str(slot): list(map(float, spec.alpha_for(slot, len(routes))))
                for slot in spec.slots
            },
        }
        if entry not in ods:
            ods.append(entry)
    return {
        "scenario": sc.name,
        "seed": seed,
        "delta_minutes": sc.delta_min,
        "wait_cap": sc.n_cap,
        "theta": _keyed_to_json(sc.theta),
        "beta": _keyed_to_json(sc.beta),
        "walk": {
            "ett_s": sc.walk.ett_default,
            "ext_s": sc.walk.ext_default,
            "tft_s": sc.walk.tft_default,
        },
    }


def _keyed_to_json(dists: KeyedDists) -> dict:
    return {
        "default": list(map(float, dists.default)),
        "keys": {
            "|".join(str(p) for p in key): list(map(float, probs))
            for key, probs in dists.keys.items()
        },
    }
