"""Exhaustive reference solvers used to validate the fast paths.

Everything here trades speed for transparency: spends are enumerated on a
lattice with no optimality-structure shortcuts (no water levels, no
warm-started scans), so agreement with the production solvers is evidence
rather than tautology.  A state-count guard refuses problems that would
not finish at desk scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, dp_causal
from .channel import expected_mi_rayleigh
from .errors import StateCapExceeded, ValidationError
from .si_models import Scenario

__all__ = ["GridSearchConfig", "brute_force_fullsi", "brute_force_causal"]


@dataclass(frozen=True)
class GridSearchConfig:
    """Lattice step and the refusal threshold on enumeration work."""

    t_step: float = 1e-3
    max_states: int = 500_000_000

    def __post_init__(self):
        if not (self.t_step > 0.0):
            raise ValidationError(f"t_step must be positive, got {self.t_step!r}")
        if self.max_states < 1:
            raise ValidationError(f"max_states must be >= 1, got {self.max_states!r}")


@_kernels.maybe_njit(cache=True)
def _lattice_dp_core(snr, caps, t_step):
    """Exhaustive spent-energy DP over the cumulative-budget lattice.

    caps[k] counts lattice units allowed through slot k+1.  Every feasible
    lattice spend is visited; ties go to the smaller spend.
    """
    K = len(snr)
    n = caps[K - 1]
    value = np.zeros(n + 1)
    choice = np.zeros((K, n + 1), dtype=np.int64)
    for k in range(K - 1, -1, -1):
        cap = caps[k]
        smax = caps[k - 1] if k > 0 else 0
        mi_k = np.log1p(snr[k] * t_step * np.arange(cap + 1)) / _kernels.LN2
        new_value = np.zeros(n + 1)
        for s in range(smax + 1):
            best = -1.0
            best_t = 0
            for t in range(cap - s + 1):
                v = mi_k[t] + value[s + t]
                if v > best:
                    best = v
                    best_t = t
            new_value[s] = best
            choice[k, s] = best_t
        value = new_value
    alloc = np.zeros(K)
    s = 0
    for k in range(K):
        t = choice[k, s]
        alloc[k] = t_step * t
        s += t
    return alloc, value[0]


def _fullsi_unbounded(sc, cfg):
    cum = sc.cumulative_energy()
    caps = np.floor(cum[1:] / cfg.t_step + 1e-9).astype(np.int64)
    work = int(np.sum((caps + 1).astype(np.float64) ** 2))
    if work > cfg.max_states:
        raise StateCapExceeded(
            f"lattice DP needs ~{work:.2e} evaluations, cap is {cfg.max_states:.2e}; "
            f"raise t_step or max_states")
    alloc, tput = _lattice_dp_core(sc.snr_array(), caps, cfg.t_step)
    return np.asarray(alloc), float(tput)


def _fullsi_bounded(sc, cfg):
    """Enumerate lattice spends for slots 1..K-1, drain the store in slot K.

    Draining last is never worse because the rate is increasing in the
    spend, so the search space stays exhaustive over the spends that matter.
    """
    K = sc.K
    snr = sc.snr_array()
    harvest = sc.harvest_array()
    step = cfg.t_step

    def mi(g, t):
        return np.log1p(g * t) / _kernels.LN2

    if K == 1:
        return np.array([sc.b1]), float(mi(snr[0], sc.b1))
    if K > 4:
        raise StateCapExceeded(
            f"bounded-store enumeration supports K <= 4, got K={K}")

    n1 = int(math.floor(sc.b1 / step + 1e-9))
    per_slot = int(math.floor(min(sc.bmax, np.max(sc.cumulative_energy())) / step + 1e-9)) + 1
    if float(per_slot) ** (K - 1) > cfg.max_states:
        raise StateCapExceeded(
            f"bounded-store enumeration needs ~{float(per_slot) ** (K - 1):.2e} paths, "
            f"cap is {cfg.max_states:.2e}; raise t_step or max_states")

    best = -1.0
    best_alloc = None
    t1_grid = step * np.arange(n1 + 1)
    if K == 2:
        b2 = np.minimum(sc.b1 - t1_grid + harvest[0], sc.bmax)
        tot = mi(snr[0], t1_grid) + mi(snr[1], b2)
        i = int(np.argmax(tot))
        return np.array([t1_grid[i], b2[i]]), float(tot[i])
    for t1 in t1_grid:
        b2 = min(sc.b1 - t1 + harvest[0], sc.bmax)
        v1 = mi(snr[0], t1)
        n2 = int(math.floor(b2 / step + 1e-9))
        t2_grid = step * np.arange(n2 + 1)
        if K == 3:
            b3 = np.minimum(b2 - t2_grid + harvest[1], sc.bmax)
            tot = v1 + mi(snr[1], t2_grid) + mi(snr[2], b3)
            i = int(np.argmax(tot))
            if tot[i] > best:
                best = float(tot[i])
                best_alloc = np.array([t1, t2_grid[i], b3[i]])
        else:
            for t2 in t2_grid:
                b3 = min(b2 - t2 + harvest[1], sc.bmax)
                v2 = v1 + mi(snr[1], t2)
                n3 = int(math.floor(b3 / step + 1e-9))
                t3_grid = step * np.arange(n3 + 1)
                b4 = np.minimum(b3 - t3_grid + harvest[2], sc.bmax)
                tot = v2 + mi(snr[2], t3_grid) + mi(snr[3], b4)
                i = int(np.argmax(tot))
                if tot[i] > best:
                    best = float(tot[i])
                    best_alloc = np.array([t1, t2, t3_grid[i], b4[i]])
    return best_alloc, best


def brute_force_fullsi(sc, cfg=None):
    """Best lattice allocation for a fully known scenario.

    Returns (allocation, throughput_bits).  The reported optimum sits
    within the lattice resolution of the continuous one: coarser t_step
    runs faster but certifies less.
    """
    if not isinstance(sc, Scenario):
        raise ValidationError("expected a Scenario")
    cfg = cfg or GridSearchConfig()
    if math.isinf(sc.bmax):
        return _fullsi_unbounded(sc, cfg)
    return _fullsi_bounded(sc, cfg)


def brute_force_causal(model, K, bmax=math.inf, delta_b=0.01, snr_quad_nodes=32,
                       b_top=None, max_states=200_000):
    """Causal value tables by full enumeration over the same state grid.

    Mirrors the grid, interpolation, clipping, and tie-breaking conventions
    of dp_causal.solve but scans every lattice spend for every state with
    plain argmax loops.  Returns a ValueGrid.
    """
    struct = dp_causal.build_structure(model, K, snr_quad_nodes)
    grid = dp_causal.build_grid(model, K, bmax, delta_b, snr_quad_nodes, b_top, struct)
    battery = grid.battery
    ng, nh, nb = len(grid.snr_nodes), len(grid.harvest_nodes), len(battery)
    if K * grid.n_states > max_states:
        raise StateCapExceeded(
            f"{K * grid.n_states} state evaluations exceed the cap {max_states}")

    bmax_eff = min(grid.bmax, battery[-1])
    mi_rows = np.log1p(np.outer(grid.snr_nodes, battery)) / _kernels.LN2
    values = np.empty((K, ng, nh, nb))
    values[K - 1] = np.broadcast_to(mi_rows[:, None, :], (ng, nh, nb))

    for s in range(K - 2, -1, -1):
        jbar = np.zeros((ng, nh, nb))
        use_ray_terminal = s == K - 2 and struct.snr_kind == "rayleigh"
        for h in range(nh):
            for hn in range(nh):
                ph = struct.harvest_trans[s][h, hn]
                if ph == 0.0:
                    continue
                xq = np.minimum(battery + grid.harvest_nodes[hn], bmax_eff)
                if use_ray_terminal:
                    contrib = expected_mi_rayleigh(struct.rayleigh_mean, xq)
                    jbar[:, h, :] += ph * contrib[None, :]
                    continue
                for g in range(ng):
                    acc = np.zeros(nb)
                    for gn in range(ng):
                        pg = struct.snr_trans[s][g, gn]
                        if pg == 0.0:
                            continue
                        acc += pg * np.interp(xq, battery, values[s + 1, gn, hn])
                    jbar[g, h] += ph * acc
        for g in range(ng):
            for h in range(nh):
                for ib in range(nb):
                    seg = mi_rows[g, :ib + 1] + jbar[g, h, ib::-1]
                    values[s, g, h, ib] = float(np.max(seg))
    return dp_causal.ValueGrid(K=K, grid=grid, values=values)
