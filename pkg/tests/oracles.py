"""Independent reference computations used to pin expected values.

These deliberately take different computational routes from the package:
the backoff chain is solved as an explicit stationary distribution of the
per-stage Markov chain, and the activity lattice is enumerated exhaustively
without the best-first truncation machinery.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from edcacap.saturation import service_time


def stage_windows(cw_min: int, cw_max: int, retry: int) -> list[int]:
    return [min(2 ** (k - 1) * (cw_min + 1), cw_max + 1) - 1
            for k in range(1, retry + 1)]


def dtmc_attempt_prob(p_col: float, cw_min: int, cw_max: int, retry: int) -> float:
    """Attempt probability from the explicit backoff Markov chain.

    States are (stage, counter); one transition per slot; the counter-zero
    state is the attempt slot.  Solved as a stationary distribution via a
    linear system rather than any closed form.
    """
    windows = stage_windows(cw_min, cw_max, retry)
    index = {}
    for k, w in enumerate(windows):
        for c in range(w + 1):
            index[(k, c)] = len(index)
    n = len(index)
    P = np.zeros((n, n))

    def spread(row: int, stage: int, prob: float) -> None:
        w = windows[stage]
        for c in range(w + 1):
            P[row, index[(stage, c)]] += prob / (w + 1)

    for (k, c), row in index.items():
        if c > 0:
            P[row, index[(k, c - 1)]] = 1.0
        else:
            spread(row, 0, 1.0 - p_col)        # success: fresh packet
            if k + 1 < retry:
                spread(row, k + 1, p_col)      # retry at the next stage
            else:
                spread(row, 0, p_col)          # drop: fresh packet
    # stationary distribution
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return float(sum(pi[index[(k, 0)]] for k in range(retry)))


def dtmc_symmetric_fixed_point(stations: int, cw_min: int, cw_max: int,
                               retry: int, tol: float = 1e-12,
                               max_iter: int = 20000) -> tuple[float, float]:
    """(attempt, collision) probabilities for n identical saturated queues."""
    tau = 2.0 / (cw_min + 2.0)
    for _ in range(max_iter):
        p = 1.0 - (1.0 - tau) ** (stations - 1)
        tau_new = dtmc_attempt_prob(p, cw_min, cw_max, retry)
        if abs(tau_new - tau) < tol:
            return tau_new, 1.0 - (1.0 - tau_new) ** (stations - 1)
        tau = 0.5 * tau + 0.5 * tau_new
    raise RuntimeError("oracle fixed point did not converge")


def conditioned_weight(j, counts, rho, table) -> float:
    """Joint activity probability, computed straight from the definition."""
    w = 1.0
    for jp, tc in enumerate(table):
        f, k = tc.flow_count, counts[jp]
        p = min(max(rho[jp], 0.0), 1.0)
        if jp == j:
            w *= math.comb(f - 1, k - 1) * p ** (k - 1) * (1 - p) ** (f - k)
        else:
            w *= math.comb(f, k) * p ** k * (1 - p) ** (f - k)
    return w


def brute_force_service_rate(j, rho, table, times, saturated,
                             config=None) -> float:
    """Exhaustive-lattice service rate (frames/s): no heap, no truncation."""
    ranges = []
    for jp, tc in enumerate(table):
        if jp in saturated:
            ranges.append([tc.flow_count])
        elif jp == j:
            ranges.append(list(range(1, tc.flow_count + 1)))
        else:
            ranges.append(list(range(0, tc.flow_count + 1)))
    total = 0.0
    mass = 0.0
    for counts in itertools.product(*ranges):
        w = conditioned_weight(j, counts, rho, table)
        if w == 0.0:
            continue
        srv = service_time(table, times, counts, config)[j]
        total += w / srv
        mass += w
    return 1e6 * total / mass
