"""Pure-Python/numpy implementations of the hot kernels.

Mirrors metroflow._kernels._native exactly; selected automatically when the
compiled extension is unavailable (or forced via METROFLOW_KERNELS=python).
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def chain_plans(leg_deps, leg_arrs, t_entry, tfts, exit_pos, n_cap):
    """Enumerate feasible train chains for one (trip, route).

    leg_deps/leg_arrs: per-leg arrays of departure seconds at the board
    station and arrival seconds at the alight station, one entry per train in
    departure order.  tfts: minimum transfer seconds before each leg after
    the first.  exit_pos: index the last leg's train must equal (-1: none).
    Returns (trains, waits): int32 arrays of shape (plans, legs).
    """
    n_legs = len(leg_deps)
    if exit_pos < 0:
        return (np.empty((0, n_legs), dtype=np.int32),) * 2

    trains_out: list[list[int]] = []
    waits_out: list[list[int]] = []
    idx = [0] * n_legs
    wts = [0] * n_legs

    def descend(leg: int, ready: float) -> None:
        dep = leg_deps[leg]
        start = int(np.searchsorted(dep, ready, side="left"))
        if leg == n_legs - 1:
            w = exit_pos - start + 1
            if 1 <= w <= n_cap:
                idx[leg], wts[leg] = exit_pos, w
                trains_out.append(idx.copy())
                waits_out.append(wts.copy())
            return
        stop = min(start + n_cap, dep.shape[0])
        for i in range(start, stop):
            idx[leg], wts[leg] = i, i - start + 1
            descend(leg + 1, leg_arrs[leg][i] + tfts[leg])

    descend(0, t_entry)
    if not trains_out:
        return (np.empty((0, n_legs), dtype=np.int32),) * 2
    return (
        np.array(trains_out, dtype=np.int32),
        np.array(waits_out, dtype=np.int32),
    )


def em_mixture(weights, tol=1e-8, max_iter=200, eps=0.0):
    """EM for mixture proportions given per-trip component likelihoods.

    weights: (trips, components) likelihood matrix; every row must have a
    positive sum.  Components with no support anywhere stay at zero.
    Returns (proportions, log-likelihood trace, converged flag).
    """
    w = np.asarray(weights, dtype=np.float64)
    q, z = w.shape
    support = (w > 0).any(axis=0)
    if not support.any():
        raise ValueError("no component has support")
    alpha = support / support.sum()

    trace = []
    totals = w @ alpha
    if (totals <= 0).any():
        raise ValueError("a trip has zero probability under every component")
    ll = float(np.log(totals).sum())
    trace.append(ll)
    converged = False
    for _ in range(max_iter):
        resp_col = alpha * (w / totals[:, None]).sum(axis=0)
        numer = resp_col + eps * support
        alpha = numer / numer.sum()
        totals = w @ alpha
        new_ll = float(np.log(totals).sum())
        trace.append(new_ll)
        if new_ll - ll < tol:
            converged = True
            break
        ll = new_ll
    return alpha, trace, converged


def em_waits(prior_w, w_obs, offsets, support_n, tol=1e-8, max_iter=200, eps=0.0):
    """EM for a wait-count distribution under fixed per-plan prior factors.

    prior_w[p]: fixed factor of plan p (origin-wait probability); w_obs[p]:
    the 1-based wait count whose distribution is being estimated; offsets:
    CSR boundaries grouping plans into trips.  Every trip needs a positive
    total prior.  Returns (probs, log-likelihood trace, converged flag).
    """
    prior = np.asarray(prior_w, dtype=np.float64)
    w_idx = np.asarray(w_obs, dtype=np.int64) - 1
    offs = np.asarray(offsets, dtype=np.int64)
    q = offs.shape[0] - 1
    if ((w_idx < 0) | (w_idx >= support_n)).any():
        raise ValueError("wait count outside [1, n]")
    beta = np.full(support_n, 1.0 / support_n)

    def trip_totals(u):
        return np.add.reduceat(u, offs[:-1]) if q else np.empty(0)

    trace = []
    u = prior * beta[w_idx]
    totals = trip_totals(u)
    if (totals <= 0).any():
        raise ValueError("a trip has zero total prior probability")
    ll = float(np.log(totals).sum())
    trace.append(ll)
    converged = False
    for _ in range(max_iter):
        gamma = u / np.repeat(totals, np.diff(offs))
        numer = np.bincount(w_idx, weights=gamma, minlength=support_n) + eps
        beta = numer / numer.sum()
        u = prior * beta[w_idx]
        totals = trip_totals(u)
        new_ll = float(np.log(totals).sum())
        trace.append(new_ll)
        if new_ll - ll < tol:
            converged = True
            break
        ll = new_ll
    return beta, trace, converged
