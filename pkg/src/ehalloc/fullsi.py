"""Optimal allocation when the whole energy and SNR future is known.

With an unlimited battery the problem is a throughput maximization under
the cumulative harvest constraints, and the optimum is a staircase of
water-filling blocks: within each block one common water level, levels
nondecreasing across blocks, and the cumulative constraint tight at each
block boundary (the transition slots).  ``staircase_waterfill`` finds that
structure by scanning candidate boundaries from the horizon downward;
``update_with_new_slot`` extends a solved instance by one slot without
redoing the whole scan.  For a two-slot instance ``closed_form_k2`` gives
the first-slot spend in closed form, battery cap included, and
``dp_full_finite_bmax`` handles general finite-capacity instances on a
battery grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .channel import mutual_info
from .errors import DomainError, ValidationError
from .si_models import Scenario

__all__ = [
    "WaterFillResult",
    "StaircaseResult",
    "GridDpResult",
    "waterfill",
    "staircase_waterfill",
    "update_with_new_slot",
    "closed_form_k2",
    "dp_full_finite_bmax",
]

DEFAULT_EPS = 1e-9


@dataclass
class WaterFillResult:
    """One water-filling block: allocation = [level - 1/snr]^+ per slot."""

    allocation: np.ndarray
    water_level: float
    residual: float
    degenerate: bool = False

    @property
    def total(self):
        return float(self.allocation.sum())


@dataclass
class StaircaseResult:
    """Optimal full-knowledge allocation and its block structure.

    transition_slots are 1-based and end with the horizon; water_levels
    holds the block level per slot.
    """

    allocation: np.ndarray
    water_levels: np.ndarray
    transition_slots: list
    throughput_bits: float
    eps: float = DEFAULT_EPS
    degenerate: bool = False

    def to_dict(self):
        return {
            "transition_slots": [int(v) for v in self.transition_slots],
            "water_levels": [float(v) for v in self.water_levels],
            "allocation": [float(v) for v in self.allocation],
            "throughput_bits": float(self.throughput_bits),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class GridDpResult:
    """Allocation found by the finite-capacity grid recursion."""

    allocation: np.ndarray
    throughput_bits: float
    delta_b: float


def _inv_snr(snr):
    snr = np.asarray(snr, dtype=float)
    out = np.full(snr.shape, np.inf)
    live = snr > 0.0
    out[live] = 1.0 / snr[live]
    return out


def waterfill(snr, p_max, eps=DEFAULT_EPS):
    """Split a budget across parallel slots by water-filling.

    Parameters
    ----------
    snr : array_like
        Nonnegative per-slot SNRs.  Zero-SNR slots never receive energy.
    p_max : float
        Total energy budget.
    eps : float
        Bisection stops once the poured total is within eps below p_max.

    Returns
    -------
    WaterFillResult
        The sum of the allocation never exceeds p_max.  When every slot has
        zero SNR but p_max > 0 the instance is degenerate: the allocation
        stays zero and the result is flagged.
    """
    snr = np.atleast_1d(np.asarray(snr, dtype=float))
    if snr.ndim != 1 or snr.size == 0:
        raise ValidationError("snr must be a nonempty 1-d array")
    if np.any(snr < 0.0) or np.any(~np.isfinite(snr)):
        raise DomainError(f"snr must be finite and nonnegative, got {snr!r}")
    if not np.isfinite(p_max) or p_max < 0.0:
        raise DomainError(f"p_max must be finite and nonnegative, got {p_max!r}")
    if eps <= 0.0:
        raise ValidationError(f"eps must be positive, got {eps!r}")
    alloc, level, degenerate = _kernels.wf_bisect(_inv_snr(snr), float(p_max), float(eps))
    return WaterFillResult(
        allocation=alloc,
        water_level=float(level),
        residual=float(p_max - alloc.sum()),
        degenerate=bool(degenerate),
    )


def staircase_waterfill(sc, eps=DEFAULT_EPS):
    """Optimal allocation for an unlimited-battery instance.

    Scans candidate transition slots from the horizon downward; a candidate
    block is kept when its water-filling allocation respects every
    cumulative energy constraint inside the block (tolerance eps).  The
    accepted blocks exhaust their budgets, so the cumulative constraint is
    tight at each transition slot.

    Single-slot blocks spend their budget exactly rather than through
    bisection.  Blocks whose slots all have zero SNR spend nothing, keep
    the previous water level for display, and flag the result degenerate.
    """
    if not isinstance(sc, Scenario):
        raise ValidationError("staircase_waterfill needs a Scenario")
    if not math.isinf(sc.bmax):
        raise ValidationError(
            "staircase_waterfill assumes an unlimited battery; "
            "finite caps go through dp_full_finite_bmax")
    if eps <= 0.0:
        raise ValidationError(f"eps must be positive, got {eps!r}")
    inv = _inv_snr(sc.snr_array())
    cum = sc.cumulative_energy()
    alloc, levels, ts, n_ts, degenerate = _kernels.staircase_core(inv, cum, float(eps))
    return StaircaseResult(
        allocation=alloc,
        water_levels=levels,
        transition_slots=[int(v) for v in ts[:n_ts]],
        throughput_bits=float(_kernels.throughput_bits(sc.snr_array(), alloc)),
        eps=float(eps),
        degenerate=bool(degenerate),
    )


def _check_prev_matches(prev, sc_old, eps):
    if len(prev.allocation) != sc_old.K:
        raise ValidationError(
            f"previous result covers {len(prev.allocation)} slots, scenario has {sc_old.K}")
    if not prev.transition_slots or prev.transition_slots[-1] != sc_old.K:
        raise ValidationError("previous transition slots must end at the old horizon")
    tol = 10.0 * eps + 1e-12
    cum = sc_old.cumulative_energy()
    run = np.cumsum(prev.allocation)
    if np.any(run > cum[1:] + tol):
        raise ValidationError("previous allocation violates the scenario's energy curve")
    if not prev.degenerate:
        for t in prev.transition_slots:
            if abs(run[t - 1] - cum[t]) > tol:
                raise ValidationError(
                    f"previous allocation is not tight at transition slot {t}; "
                    "it does not match this scenario")


def update_with_new_slot(prev, sc_old, new_snr, new_harvest, eps=DEFAULT_EPS):
    """Extend a solved unlimited-battery instance by one slot.

    new_harvest is the energy arriving at the end of the old horizon,
    new_snr the SNR of the appended slot.  Each existing block, oldest
    first, is tested for a merge with everything after it through the new
    slot; the first feasible merge wins and the earlier blocks are kept
    verbatim.  If no merge is feasible the new slot forms its own block.
    The result matches a fresh staircase_waterfill of the extended
    scenario within bisection tolerance.
    """
    if not isinstance(sc_old, Scenario):
        raise ValidationError("update_with_new_slot needs the old Scenario")
    if not math.isinf(sc_old.bmax):
        raise ValidationError("update_with_new_slot assumes an unlimited battery")
    _check_prev_matches(prev, sc_old, eps)
    new_snr = float(new_snr)
    new_harvest = float(new_harvest)
    if new_snr < 0.0 or not math.isfinite(new_snr):
        raise DomainError(f"new_snr must be finite and nonnegative, got {new_snr!r}")
    if new_harvest < 0.0 or not math.isfinite(new_harvest):
        raise DomainError(f"new_harvest must be finite and nonnegative, got {new_harvest!r}")

    K_new = sc_old.K + 1
    sc_new = Scenario(
        K=K_new,
        b1=sc_old.b1,
        bmax=sc_old.bmax,
        snr=sc_old.snr + (new_snr,),
        harvest=sc_old.harvest + (new_harvest,),
        h0=sc_old.h0,
    )
    inv = _inv_snr(sc_new.snr_array())
    cum = sc_new.cumulative_energy()
    # merge starts: the left edge of each old block, then the new slot alone
    starts = [0] + [int(t) for t in prev.transition_slots]

    for i, a in enumerate(starts):
        span = K_new - a
        budget = cum[K_new] - cum[a]
        prev_level = float(prev.water_levels[a - 1]) if a > 0 else 0.0
        if span == 1:
            block, level, degen, feasible = _single_block(inv[a], budget, prev_level, eps)
        else:
            block, level, degen = _kernels.wf_bisect(inv[a:K_new], budget, float(eps))
            if degen:
                level = prev_level
            run = np.cumsum(block)
            feasible = bool(np.all(run <= cum[a + 1:K_new + 1] - cum[a] + eps))
        if feasible:
            alloc = np.concatenate([np.asarray(prev.allocation[:a], dtype=float), block])
            levels = np.concatenate([np.asarray(prev.water_levels[:a], dtype=float),
                                     np.full(span, level)])
            ts = list(prev.transition_slots[:i]) + [K_new]
            return StaircaseResult(
                allocation=alloc,
                water_levels=levels,
                transition_slots=ts,
                throughput_bits=float(_kernels.throughput_bits(sc_new.snr_array(), alloc)),
                eps=float(eps),
                degenerate=bool(prev.degenerate or degen),
            )
    raise AssertionError("unreachable: the final single-slot block is always feasible")


def _single_block(inv_value, budget, prev_level, eps):
    """Exact one-slot block: spend the budget, or nothing on zero SNR."""
    if math.isfinite(inv_value):
        return np.array([budget]), budget + inv_value, False, True
    return np.array([0.0]), prev_level, budget > eps, True


def closed_form_k2(sc):
    """First-slot spend of a two-slot instance, in closed form.

    Returns (t1, mode) with mode one of:

    * "G" -- greedy, the whole initial store goes to slot 1
    * "B" -- balanced, the interior split that equalizes water levels
    * "C" -- conservative, clipped down so the arriving harvest is not
      spilled by the battery cap (or zero when slot 1 is worthless)

    The interior split is t = B1/2 + (1/snr2 - 1/snr1 + H1)/2, clipped to
    [max(0, B1 + H1 - Bmax), B1]; a harvest larger than the cap forces the
    greedy mode outright.
    """
    if not isinstance(sc, Scenario):
        raise ValidationError("closed_form_k2 needs a Scenario")
    if sc.K != 2:
        raise ValidationError(f"closed_form_k2 needs K=2, got K={sc.K}")
    b1 = sc.b1
    h1 = sc.harvest[0]
    g1, g2 = sc.snr
    if g1 == 0.0 and g2 == 0.0:
        lower = max(0.0, b1 + h1 - sc.bmax) if math.isfinite(sc.bmax) else 0.0
        return lower, "C"
    if h1 > sc.bmax:
        return b1, "G"
    inv1 = 1.0 / g1 if g1 > 0.0 else math.inf
    inv2 = 1.0 / g2 if g2 > 0.0 else math.inf
    if math.isinf(inv2):
        return b1, "G"
    if math.isinf(inv1):
        tilde = -math.inf
    else:
        tilde = 0.5 * b1 + 0.5 * (inv2 - inv1 + h1)
    lower = max(0.0, b1 + h1 - sc.bmax) if math.isfinite(sc.bmax) else 0.0
    if tilde >= b1:
        return b1, "G"
    if tilde <= lower:
        return lower, "C"
    return tilde, "B"


def k2_allocation(sc, t1=None):
    """Full two-slot allocation implied by a first-slot spend."""
    if t1 is None:
        t1, _ = closed_form_k2(sc)
    b2 = min(sc.b1 - t1 + sc.harvest[0], sc.bmax)
    return np.array([t1, b2])


def dp_full_finite_bmax(sc, delta_b, eps=DEFAULT_EPS):
    """Grid recursion for a fully known instance with a battery cap.

    Builds value tables backward on a battery lattice of step delta_b
    (spends restricted to the lattice, arrivals handled by linear
    interpolation), then replays forward from the initial store.  The
    final slot always spends the whole store.  Throughput converges at
    first order in delta_b; with an effectively unlimited cap the replayed
    allocation approaches the staircase optimum.
    """
    if not isinstance(sc, Scenario):
        raise ValidationError("dp_full_finite_bmax needs a Scenario")
    if not (isinstance(delta_b, float) and delta_b > 0.0) and not (
            isinstance(delta_b, int) and delta_b > 0):
        raise ValidationError(f"delta_b must be positive, got {delta_b!r}")
    delta_b = float(delta_b)
    K = sc.K
    snr = sc.snr_array()
    harvest = sc.harvest_array()
    reach = sc.b1 + (harvest.sum() if K > 1 else 0.0)
    top = min(sc.bmax, reach)
    n = max(2, int(math.ceil(top / delta_b - 1e-12)) + 1)
    grid = delta_b * np.arange(n)
    bmax_eff = min(sc.bmax, grid[-1])

    mi_rows = np.log1p(np.outer(snr, grid)) / _kernels.LN2
    j_next = mi_rows[K - 1].copy()
    tables = [None] * K
    tables[K - 1] = j_next
    for k in range(K - 2, -1, -1):
        arrive = np.minimum(grid + harvest[k], bmax_eff)
        w = np.interp(arrive, grid, j_next)
        j_row, _ = _kernels.tscan(mi_rows[k], w)
        tables[k] = j_row
        j_next = j_row

    alloc = np.empty(K)
    b = sc.b1
    for k in range(K):
        if k == K - 1:
            t = b
        else:
            m = int(math.floor(b / delta_b + 1e-12))
            t_cand = np.append(grid[:m + 1], b)
            arrive = np.minimum(b - t_cand + harvest[k], sc.bmax)
            g = np.log1p(snr[k] * t_cand) / _kernels.LN2 + np.interp(arrive, grid, tables[k + 1])
            t = float(t_cand[int(np.argmax(g))])
        alloc[k] = t
        h = harvest[k] if k < K - 1 else 0.0
        b = min(b - t + h, sc.bmax)
        if b < 0.0:
            b = 0.0
    return GridDpResult(
        allocation=alloc,
        throughput_bits=float(_kernels.throughput_bits(snr, alloc)),
        delta_b=delta_b,
    )
