"""Hot numeric kernels with optional numba acceleration.

Every kernel here is written once, in numpy-compatible form, and compiled
with numba when it is available.  Setting the environment variable
``EHALLOC_NO_NUMBA=1`` (before import) forces the pure-numpy path; the same
happens automatically when numba is not installed.  ``BACKEND`` records
which path is active.  ``benchmarks/bench_kernels.py`` times one against
the other.
"""

from __future__ import annotations

import math
import os

import numpy as np

_FORCE_NUMPY = os.environ.get("EHALLOC_NO_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on",
}

try:
    if _FORCE_NUMPY:
        raise ImportError("numba disabled via EHALLOC_NO_NUMBA")
    from numba import njit as _njit

    NUMBA_ENABLED = True
except ImportError:
    NUMBA_ENABLED = False
    _njit = None

BACKEND = "numba" if NUMBA_ENABLED else "numpy"

LN2 = math.log(2.0)
WF_MAX_ITER = 200


def maybe_njit(*args, **kwargs):
    """numba.njit when enabled, identity decorator otherwise."""
    if NUMBA_ENABLED:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def deco(func):
        return func

    return deco


@maybe_njit(cache=True)
def wf_bisect(inv_snr, p_max, eps):
    """Water-filling over one block of slots by bisection on the water level.

    inv_snr holds 1/snr per slot (np.inf marks a zero-snr slot, which never
    receives energy).  Returns (allocation, level, degenerate).  The
    allocation is [level - inv_snr]^+ for the returned level, its sum never
    exceeds p_max, and the shortfall is at most eps except in the degenerate
    case (no usable slot but p_max > 0), where everything stays zero.
    """
    n = inv_snr.shape[0]
    alloc = np.zeros(n)
    if p_max <= 0.0:
        return alloc, 0.0, False
    hi = 0.0
    active = 0
    for i in range(n):
        if np.isfinite(inv_snr[i]):
            active += 1
            if inv_snr[i] > hi:
                hi = inv_snr[i]
    if active == 0:
        return alloc, 0.0, True
    # bracket: at lo the pour is 0 <= p_max, at hi it is >= p_max
    lo = 0.0
    hi = hi + p_max
    level = lo
    for _ in range(WF_MAX_ITER):
        mid = 0.5 * (lo + hi)
        poured = 0.0
        for i in range(n):
            d = mid - inv_snr[i]
            if d > 0.0:
                poured += d
        if poured > p_max:
            hi = mid
        else:
            lo = mid
            level = mid
            if p_max - poured <= eps:
                break
    for i in range(n):
        d = level - inv_snr[i]
        if d > 0.0:
            alloc[i] = d
    return alloc, level, False


@maybe_njit(cache=True)
def staircase_core(inv_snr, cum_energy, eps):
    """Interval-by-interval water-filling against the cumulative energy curve.

    cum_energy[k] is the total energy available through slot k (index 0 is
    0, index 1 the initial store).  Scans candidate transition slots from
    the horizon downward and keeps the largest one whose block allocation
    respects every intermediate cumulative constraint (tolerance eps).
    Single-slot blocks spend their budget exactly.  Returns
    (alloc, levels, ts, n_ts, degenerate) where ts[:n_ts] lists the
    accepted transition slots, 1-based.
    """
    K = inv_snr.shape[0]
    alloc = np.zeros(K)
    levels = np.zeros(K)
    ts = np.zeros(K, dtype=np.int64)
    n_ts = 0
    degenerate = False
    a = 0  # slots before a+1 are already fixed
    prev_level = 0.0
    while a < K:
        for k in range(K, a, -1):
            budget = cum_energy[k] - cum_energy[a]
            if k - a == 1:
                # one slot: pour the whole budget, or nothing on zero snr
                if np.isfinite(inv_snr[a]):
                    t_here = budget
                    level = budget + inv_snr[a]
                    degen = False
                else:
                    t_here = 0.0
                    level = prev_level
                    degen = budget > eps
                alloc[a] = t_here
                levels[a] = level
                if degen:
                    degenerate = True
                ts[n_ts] = k
                n_ts += 1
                prev_level = level
                a = k
                break
            block, level, degen = wf_bisect(inv_snr[a:k], budget, eps)
            feasible = True
            run = 0.0
            for m in range(k - a):
                run += block[m]
                if run > cum_energy[a + 1 + m] - cum_energy[a] + eps:
                    feasible = False
                    break
            if feasible:
                for m in range(k - a):
                    alloc[a + m] = block[m]
                if degen:
                    degenerate = True
                    level = prev_level
                for m in range(k - a):
                    levels[a + m] = level
                ts[n_ts] = k
                n_ts += 1
                prev_level = level
                a = k
                break
    return alloc, levels, ts, n_ts, degenerate


@maybe_njit(cache=True)
def throughput_bits(snr, alloc):
    """Sum of log2(1 + t*snr) over slots."""
    total = 0.0
    for i in range(snr.shape[0]):
        total += math.log1p(alloc[i] * snr[i]) / LN2
    return total


@maybe_njit(cache=True)
def mc_fullsi_alloc(snr, cum_energy, eps):
    """Staircase allocations for a batch of realized paths.

    snr is (runs, K); cum_energy is (runs, K+1) cumulative available energy.
    Returns the (runs, K) allocation matrix; rate accounting is left to the
    caller so every scheme shares one arithmetic path.
    """
    runs = snr.shape[0]
    K = snr.shape[1]
    out = np.empty((runs, K))
    inv = np.empty(K)
    for r in range(runs):
        for k in range(K):
            s = snr[r, k]
            inv[k] = 1.0 / s if s > 0.0 else np.inf
        alloc, _, _, _, _ = staircase_core(inv, cum_energy[r], eps)
        out[r] = alloc
    return out


@maybe_njit(cache=True)
def tscan(mi_row, w_row):
    """Lattice maximization of mi_row[t] + w_row[b - t] for every b.

    Both inputs live on the same uniform battery lattice.  Because the
    value-to-go w_row is concave, the maximizing t index never decreases
    with b, so each row scan starts at the previous maximizer (first
    maximum wins, giving the smallest maximizing spend).  Returns the value
    row and the argmax index row.
    """
    nb = w_row.shape[0]
    val = np.empty(nb)
    tidx = np.empty(nb, dtype=np.int64)
    warm = 0
    for ib in range(nb):
        seg = mi_row[warm:ib + 1] + w_row[ib - warm::-1]
        j = int(np.argmax(seg))
        val[ib] = seg[j]
        tidx[ib] = warm + j
        warm += j
    return val, tidx
