"""Maximum-likelihood estimation of wait and route-choice distributions.

Origin waits have a closed-form solution (empirical frequencies per tap-in
key).  Transfer waits and route choice carry latent structure (several plans
can explain one trip), so both are estimated with EM using per-trip
normalized responsibilities; the one-shot bound update that maximizes the
Jensen lower bound instead is available as estimator="jensen-bound".
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from . import _kernels as kernels
from .model import (
    DEFAULT_SLOT_MINUTES,
    DEFAULT_WAIT_CAP,
    Plan,
    Route,
    StationId,
    TapinKey,
    TimeSlot,
    TransferKey,
    Trip,
    RouteChoiceDistribution,
    WaitDistribution,
    slot_of,
)

DEFAULT_MIN_SUPPORT = 20
DEFAULT_EM_TOL = 1e-8
DEFAULT_EM_MAX_ITER = 200
DEFAULT_SMOOTHING = 1e-6

LL_FLOOR = float(np.finfo(np.float64).eps)

Estimator = Literal["em", "jensen-bound"]


@dataclass(frozen=True)
class WaitCounts:
    """Observed passengers per wait count for one key."""

    key: TapinKey
    counts: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.float64)
        if (c < 0).any():
            raise ValueError("negative wait count")
        object.__setattr__(self, "counts", c)


def tapin_key(trip: Trip, route: Route, delta_min: int) -> TapinKey:
    return TapinKey(trip.o, route.legs[0].line, slot_of(trip.b, delta_min))


def transfer_key(trip: Trip, route: Route, leg_index: int, delta_min: int) -> TransferKey:
    leg = route.legs[leg_index]
    return TransferKey(
        leg.board, route.legs[leg_index - 1].line, leg.line, slot_of(trip.b, delta_min)
    )


class WaitModel:
    """Estimated wait distributions with pooled and uniform fallbacks.

    Keys below the support threshold are low-confidence and resolve to the
    station-level pool (same key without the slot); keys with no data at all
    resolve to the uniform distribution.  Every fallback use is counted.
    """

    def __init__(self, n: int, min_support: int = DEFAULT_MIN_SUPPORT):
        self.n = n
        self.min_support = min_support
        self.counts: dict[object, np.ndarray] = {}
        self.fallback_uses: Counter = Counter()
        self._uniform = np.full(n, 1.0 / n)

    @staticmethod
    def _pool_key(key):
        if isinstance(key, TapinKey):
            return (key.station, key.line)
        return (key.station, key.from_line, key.to_line)

    def add_counts(self, key, counts: np.ndarray) -> None:
        self.counts[key] = np.asarray(counts, dtype=np.float64)

    def support(self, key) -> float:
        c = self.counts.get(key)
        return float(c.sum()) if c is not None else 0.0

    def is_low_confidence(self, key) -> bool:
        return self.support(key) < self.min_support

    def _pooled(self, key) -> Optional[np.ndarray]:
        pool = self._pool_key(key)
        total = np.zeros(self.n)
        found = False
        for k, c in self.counts.items():
            if self._pool_key(k) == pool:
                total += c
                found = True
        if not found or total.sum() <= 0:
            return None
        return total / total.sum()

    def lookup(self, key) -> np.ndarray:
        """Resolved probabilities for a key, applying the fallback chain."""
        c = self.counts.get(key)
        if c is not None and c.sum() >= self.min_support:
            return c / c.sum()
        pooled = self._pooled(key)
        if pooled is not None:
            self.fallback_uses["pool"] += 1
            return pooled
        self.fallback_uses["uniform"] += 1
        return self._uniform

    def distribution(self, key) -> WaitDistribution:
        return WaitDistribution(self.lookup(key))

    def exact(self, key) -> Optional[np.ndarray]:
        c = self.counts.get(key)
        if c is None or c.sum() <= 0:
            return None
        return c / c.sum()

    def keys(self) -> list:
        return sorted(self.counts, key=repr)


@dataclass
class EmDiagnostics:
    iterations: int
    converged: bool
    final_ll: float
    trace: list[float] = field(default_factory=list)


# ---------------------------------------------------------------------------
# theta: origin waits (closed form)

def estimate_theta(
    group1: Sequence[tuple[Trip, Plan]],
    delta_min: int = DEFAULT_SLOT_MINUTES,
    n: int = DEFAULT_WAIT_CAP,
    min_support: int = DEFAULT_MIN_SUPPORT,
) -> WaitModel:
    """Origin-wait distributions from no-transfer single-route trips.

    Each such trip pins down its train uniquely, so the estimate is the
    exact empirical frequency of wait counts per tap-in key.
    """
    model = WaitModel(n, min_support)
    for trip, plan in group1:
        key = tapin_key(trip, plan.route, delta_min)
        counts = model.counts.setdefault(key, np.zeros(n))
        counts[plan.waits[0] - 1] += 1
    return model


# ---------------------------------------------------------------------------
# beta: transfer waits (EM over latent first-leg trains)

def estimate_beta(
    group2: Sequence[tuple[Trip, Sequence[Plan]]],
    theta: WaitModel,
    delta_min: int = DEFAULT_SLOT_MINUTES,
    n: int = DEFAULT_WAIT_CAP,
    estimator: Estimator = "em",
    tol: float = DEFAULT_EM_TOL,
    max_iter: int = DEFAULT_EM_MAX_ITER,
    eps: float = DEFAULT_SMOOTHING,
    min_support: int = DEFAULT_MIN_SUPPORT,
) -> tuple[WaitModel, dict[TransferKey, EmDiagnostics], Counter]:
    """Transfer-wait distributions from one-transfer single-route trips.

    The first-leg train is latent; its wait probability under theta weights
    each candidate plan.  Returns the model, per-key EM diagnostics, and
    counters of excluded trips.
    """
    excluded: Counter = Counter()
    by_key: dict[TransferKey, list[tuple[np.ndarray, np.ndarray]]] = {}
    for trip, plans in group2:
        if not plans:
            excluded["no_plans"] += 1
            continue
        route = plans[0].route
        key = transfer_key(trip, route, 1, delta_min)
        prior = theta.lookup(tapin_key(trip, route, delta_min))
        pw = np.array([prior[p.waits[0] - 1] for p in plans])
        w2 = np.array([p.waits[1] for p in plans], dtype=np.int64)
        if pw.sum() <= 0:
            excluded["zero_prior"] += 1
            continue
        by_key.setdefault(key, []).append((pw, w2))

    model = WaitModel(n, min_support)
    diagnostics: dict[TransferKey, EmDiagnostics] = {}
    for key, rows in by_key.items():
        prior_w = np.concatenate([r[0] for r in rows])
        w_obs = np.concatenate([r[1] for r in rows])
        offsets = np.zeros(len(rows) + 1, dtype=np.int64)
        np.cumsum([r[0].size for r in rows], out=offsets[1:])
        if estimator == "jensen-bound":
            numer = np.bincount(w_obs - 1, weights=prior_w, minlength=n) + eps
            beta = numer / numer.sum()
            ll = _waits_ll(prior_w, w_obs, offsets, beta)
            diagnostics[key] = EmDiagnostics(1, True, ll, [ll])
        else:
            beta, trace, converged = kernels.em_waits(
                prior_w, w_obs, offsets, n, tol, max_iter, eps
            )
            diagnostics[key] = EmDiagnostics(len(trace) - 1, converged, trace[-1], list(trace))
        # expected counts from the final responsibilities
        u = prior_w * beta[w_obs - 1]
        totals = np.add.reduceat(u, offsets[:-1])
        gamma = u / np.repeat(totals, np.diff(offsets))
        model.add_counts(key, np.bincount(w_obs - 1, weights=gamma, minlength=n))
    return model, diagnostics, excluded


def _waits_ll(prior_w, w_obs, offsets, beta) -> float:
    u = prior_w * beta[np.asarray(w_obs) - 1]
    totals = np.add.reduceat(u, offsets[:-1])
    return float(np.log(np.maximum(totals, LL_FLOOR)).sum())


# ---------------------------------------------------------------------------
# plan and route probabilities

def plan_probability(
    trip: Trip, plan: Plan, theta: WaitModel, beta: WaitModel, delta_min: int
) -> float:
    """P(plan | tap-in, route) = theta(w1) * product of transfer-wait probs."""
    route = plan.route
    p = float(theta.lookup(tapin_key(trip, route, delta_min))[plan.waits[0] - 1])
    for i in range(1, len(route.legs)):
        probs = beta.lookup(transfer_key(trip, route, i, delta_min))
        p *= float(probs[plan.waits[i] - 1])
    return p


def route_probability_matrix(
    trips_with_plans: Sequence[tuple[Trip, Sequence[Sequence[Plan]]]],
    theta: WaitModel,
    beta: WaitModel,
    delta_min: int,
) -> np.ndarray:
    """Per-trip total plan probability for each route: shape (trips, routes)."""
    if not trips_with_plans:
        return np.empty((0, 0))
    z = len(trips_with_plans[0][1])
    out = np.zeros((len(trips_with_plans), z))
    for qi, (trip, per_route) in enumerate(trips_with_plans):
        for zi, plans in enumerate(per_route):
            out[qi, zi] = sum(
                plan_probability(trip, p, theta, beta, delta_min) for p in plans
            )
    return out


def log_likelihood(route_probs: np.ndarray, alpha: np.ndarray) -> tuple[float, int]:
    """Mixture log-likelihood; zero-probability trips hit the epsilon floor."""
    totals = np.asarray(route_probs, dtype=np.float64) @ np.asarray(alpha, dtype=np.float64)
    floored = int((totals < LL_FLOOR).sum())
    return float(np.log(np.maximum(totals, LL_FLOOR)).sum()), floored


# ---------------------------------------------------------------------------
# alpha: route choice

@dataclass
class AlphaResult:
    distribution: RouteChoiceDistribution
    diagnostics: EmDiagnostics
    trips_used: int
    trips_excluded: int


def estimate_alpha(
    trips_with_plans: Sequence[tuple[Trip, Sequence[Sequence[Plan]]]],
    routes: Sequence[Route],
    theta: WaitModel,
    beta: WaitModel,
    od: tuple[StationId, StationId],
    slot: TimeSlot,
    estimator: Estimator = "em",
    tol: float = DEFAULT_EM_TOL,
    max_iter: int = DEFAULT_EM_MAX_ITER,
    eps: float = DEFAULT_SMOOTHING,
) -> Optional[AlphaResult]:
    """Route-choice probabilities for one OD and slot; None when no trip is usable.

    Routes that are infeasible for every trip get probability zero.
    """
    probs = route_probability_matrix(trips_with_plans, theta, beta, slot.delta_min)
    if probs.size == 0:
        return None
    usable = probs.sum(axis=1) > 0
    excluded = int((~usable).sum())
    probs = probs[usable]
    if probs.shape[0] == 0:
        return None

    if estimator == "jensen-bound":
        # literal maximizer of the printed lower bound: linear in alpha, so
        # all mass lands on the argmax routes (split evenly on exact ties)
        scores = np.log(np.maximum(probs, LL_FLOOR)).sum(axis=0)
        best = scores == scores.max()
        alpha = best / best.sum()
        ll, _ = log_likelihood(probs, alpha)
        diag = EmDiagnostics(1, True, ll, [ll])
    else:
        alpha, trace, converged = kernels.em_mixture(probs, tol, max_iter, eps)
        diag = EmDiagnostics(len(trace) - 1, converged, trace[-1], list(trace))

    dist = RouteChoiceDistribution(od=od, slot=slot, probs=alpha)
    return AlphaResult(dist, diag, int(probs.shape[0]), excluded)
