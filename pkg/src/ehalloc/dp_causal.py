"""Backward dynamic program for causal side information.

The transmitter sees only the current state (snr, last harvest, stored
energy).  Value tables are built backward over a uniform battery grid:
the final slot spends the whole store, and every earlier slot maximizes
current rate plus expected value-to-go, where the expectation runs over
the side-information transition kernels with the battery arrival clipped
at the cap and linearly interpolated onto the grid.

Spends are restricted to the battery lattice, which makes the tables
reproducible by exhaustive enumeration (see oracle.brute_force_causal).
Because each value slice is concave in the battery coordinate, the
maximizing spend never decreases along it, and the scan for each battery
level starts where the previous one ended.

SNR processes with finite support enter the expectation exactly.  The
exponentially distributed (rayleigh) channel is folded in through
Gauss-Laguerre quadrature nodes, except in the final slot where the
expectation has a closed form (channel.expected_mi_rayleigh).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .channel import expected_mi_rayleigh, mutual_info
from .errors import ExtrapolationError, ValidationError
from .si_models import DiscreteDist, StochasticModel

__all__ = [
    "StateGrid",
    "ValueGrid",
    "PolicyTable",
    "solve",
    "optimize_slot",
    "evaluate_policy_throughput",
    "rollout_policy",
    "save_policy",
    "load_policy",
]

POLICY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class StateGrid:
    """Discretized state space: battery lattice times finite SI supports."""

    battery: np.ndarray
    snr_nodes: np.ndarray
    harvest_nodes: np.ndarray
    bmax: float

    def __post_init__(self):
        b = np.asarray(self.battery, dtype=float)
        if b.ndim != 1 or len(b) < 2:
            raise ValidationError("battery grid needs at least two points")
        if b[0] != 0.0:
            raise ValidationError("battery grid must start at 0")
        steps = np.diff(b)
        if np.any(steps <= 0) or not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-12):
            raise ValidationError("battery grid must be uniformly increasing")
        for name in ("snr_nodes", "harvest_nodes"):
            nodes = np.asarray(getattr(self, name), dtype=float)
            if nodes.ndim != 1 or len(nodes) == 0:
                raise ValidationError(f"{name} must be a nonempty 1-d array")
            if np.any(~np.isfinite(nodes)) or np.any(nodes < 0.0):
                raise ValidationError(f"{name} must be finite and nonnegative")
            if np.any(np.diff(nodes) <= 0):
                raise ValidationError(f"{name} must be strictly increasing")
        if not (self.bmax > 0.0):
            raise ValidationError(f"bmax must be positive, got {self.bmax!r}")
        object.__setattr__(self, "battery", b)
        object.__setattr__(self, "snr_nodes", np.asarray(self.snr_nodes, dtype=float))
        object.__setattr__(self, "harvest_nodes", np.asarray(self.harvest_nodes, dtype=float))
        object.__setattr__(self, "bmax", float(self.bmax))

    @property
    def delta_b(self):
        return float(self.battery[1] - self.battery[0])

    @property
    def n_states(self):
        return len(self.battery) * len(self.snr_nodes) * len(self.harvest_nodes)


@dataclass(frozen=True)
class ValueGrid:
    """Expected future bits per state; values[k-1, g, h, b] is slot k's table."""

    K: int
    grid: StateGrid
    values: np.ndarray


@dataclass(frozen=True)
class PolicyTable:
    """Optimal spend per state; same layout as ValueGrid.values."""

    K: int
    grid: StateGrid
    t_star: np.ndarray


class _DpStructure:
    """Per-slot SI supports and transition kernels extracted from a model."""

    def __init__(self, snr_nodes, snr_trans, harvest_nodes, harvest_trans,
                 snr_kind, rayleigh_mean):
        self.snr_nodes = snr_nodes
        self.snr_trans = snr_trans          # [k] maps slot k+1 -> k+2 (0-based)
        self.harvest_nodes = harvest_nodes
        self.harvest_trans = harvest_trans
        self.snr_kind = snr_kind
        self.rayleigh_mean = rayleigh_mean


def _sorted_support(values, probs=None):
    vals = np.asarray(values, dtype=float)
    order = np.argsort(vals)
    if probs is None:
        return vals[order], order
    return vals[order], np.asarray(probs, dtype=float)[order], order


def _point_mass_rows(nodes, value, n_rows):
    hit = np.nonzero(np.isclose(nodes, value, rtol=0.0, atol=1e-12))[0]
    if len(hit) == 0:
        raise ValidationError(f"trace value {value!r} missing from node set {nodes!r}")
    row = np.zeros(len(nodes))
    row[hit[0]] = 1.0
    return np.tile(row, (n_rows, 1))


def _snr_structure(proc, K, quad_nodes):
    n_trans = max(K - 1, 0)
    if proc.kind == "awgn":
        nodes = np.array([proc.mean])
        trans = [np.ones((1, 1))] * n_trans
        return nodes, trans, None
    if proc.kind == "rayleigh":
        if quad_nodes < 2:
            raise ValidationError(f"need at least 2 quadrature nodes, got {quad_nodes}")
        x, w = np.polynomial.laguerre.laggauss(quad_nodes)
        w = w / w.sum()
        nodes = proc.mean * x
        trans = [np.tile(w, (quad_nodes, 1))] * n_trans
        return nodes, trans, proc.mean
    if proc.kind == "iid":
        nodes, probs, _ = _sorted_support(proc.dist.support, proc.dist.probs)
        trans = [np.tile(probs, (len(nodes), 1))] * n_trans
        return nodes, trans, None
    if proc.kind == "markov":
        nodes, order = _sorted_support(proc.support)
        ker = np.asarray(proc.kernel)[np.ix_(order, order)]
        return nodes, [ker] * n_trans, None
    if proc.kind == "deterministic":
        if len(proc.trace) < K:
            raise ValidationError(
                f"snr trace has {len(proc.trace)} values, horizon needs {K}")
        nodes = np.unique(np.asarray(proc.trace[:K], dtype=float))
        trans = [_point_mass_rows(nodes, proc.trace[k + 1], len(nodes))
                 for k in range(n_trans)]
        return nodes, trans, None
    raise ValidationError(f"unsupported snr process kind {proc.kind!r}")


def _harvest_structure(proc, K, h0):
    """Nodes index the harvest seen before each slot; h0 is always a node."""
    n_trans = max(K - 1, 0)
    if proc.kind == "iid":
        sup, probs, _ = _sorted_support(proc.dist.support, proc.dist.probs)
        nodes = np.unique(np.append(sup, h0))
        row = np.zeros(len(nodes))
        for v, p in zip(sup, probs):
            row[np.searchsorted(nodes, v)] += p
        trans = [np.tile(row, (len(nodes), 1))] * n_trans
        return nodes, trans
    if proc.kind == "markov":
        nodes, order = _sorted_support(proc.support)
        ker = np.asarray(proc.kernel)[np.ix_(order, order)]
        return nodes, [ker] * n_trans
    if proc.kind == "deterministic":
        need = K - 1
        if len(proc.trace) < need:
            raise ValidationError(
                f"harvest trace has {len(proc.trace)} values, horizon needs {need}")
        vals = np.append(np.asarray(proc.trace[:need], dtype=float), h0)
        nodes = np.unique(vals)
        trans = [_point_mass_rows(nodes, proc.trace[k], len(nodes))
                 for k in range(n_trans)]
        return nodes, trans
    raise ValidationError(f"unsupported harvest process kind {proc.kind!r}")


def build_structure(model, K, snr_quad_nodes=32):
    """Extract DP supports and transition kernels from a model."""
    if not isinstance(model, StochasticModel):
        raise ValidationError("expected a StochasticModel")
    if not isinstance(K, int) or K < 1:
        raise ValidationError(f"K must be a positive integer, got {K!r}")
    snr_nodes, snr_trans, ray_mean = _snr_structure(model.snr, K, snr_quad_nodes)
    harvest_nodes, harvest_trans = _harvest_structure(model.harvest, K, model.h0)
    return _DpStructure(snr_nodes, snr_trans, harvest_nodes, harvest_trans,
                        model.snr.kind, ray_mean)


def _b1_upper(model):
    if isinstance(model.b1, DiscreteDist):
        return max(model.b1.support)
    return float(model.b1)


def build_grid(model, K, bmax=math.inf, delta_b=0.01, snr_quad_nodes=32,
               b_top=None, structure=None):
    """Battery lattice covering every state reachable from the model."""
    if delta_b <= 0.0:
        raise ValidationError(f"delta_b must be positive, got {delta_b!r}")
    struct = structure or build_structure(model, K, snr_quad_nodes)
    h_max = float(np.max(struct.harvest_nodes)) if K > 1 else 0.0
    reach = _b1_upper(model) + (K - 1) * h_max
    top = min(bmax, reach)
    if b_top is not None:
        top = max(top, float(b_top))
    n = max(2, int(math.ceil(top / delta_b - 1e-12)) + 1)
    battery = delta_b * np.arange(n)
    return StateGrid(battery=battery, snr_nodes=struct.snr_nodes,
                     harvest_nodes=struct.harvest_nodes, bmax=float(bmax))


def _expect_tables(j_next, snr_tr, harvest_tr, grid):
    """Expected value-to-go over one SI transition, battery arrival clipped."""
    battery = grid.battery
    bmax_eff = min(grid.bmax, battery[-1])
    ng, nh, nb = j_next.shape
    shifted = np.empty_like(j_next)
    for j in range(nh):
        xq = np.minimum(battery + grid.harvest_nodes[j], bmax_eff)
        for g in range(ng):
            shifted[g, j] = np.interp(xq, battery, j_next[g, j])
    over_h = np.einsum("hj,gjx->ghx", harvest_tr, shifted)
    return np.einsum("gG,Ghx->ghx", snr_tr, over_h)


def _expect_terminal_rayleigh(mean, harvest_tr, grid, ng):
    """Exact SNR expectation of the final slot's rate, per harvest arrival."""
    battery = grid.battery
    bmax_eff = min(grid.bmax, battery[-1])
    nh = len(grid.harvest_nodes)
    rows = np.empty((nh, len(battery)))
    for j in range(nh):
        xq = np.minimum(battery + grid.harvest_nodes[j], bmax_eff)
        rows[j] = expected_mi_rayleigh(mean, xq)
    over_h = harvest_tr @ rows
    return np.broadcast_to(over_h[None, :, :], (ng,) + over_h.shape).copy()


def solve(model, K, bmax=math.inf, delta_b=0.01, snr_quad_nodes=32, b_top=None):
    """Build value and policy tables for every slot.

    Returns (ValueGrid, PolicyTable).  Spends live on the battery lattice;
    ties go to the smallest maximizing spend.  The final slot always spends
    the whole store.
    """
    struct = build_structure(model, K, snr_quad_nodes)
    grid = build_grid(model, K, bmax, delta_b, snr_quad_nodes, b_top, struct)
    battery = grid.battery
    ng, nh, nb = len(grid.snr_nodes), len(grid.harvest_nodes), len(battery)

    mi_rows = np.log1p(np.outer(grid.snr_nodes, battery)) / _kernels.LN2
    values = np.empty((K, ng, nh, nb))
    t_star = np.empty((K, ng, nh, nb))
    values[K - 1] = np.broadcast_to(mi_rows[:, None, :], (ng, nh, nb))
    t_star[K - 1] = np.broadcast_to(battery, (ng, nh, nb))

    for s in range(K - 2, -1, -1):
        if s == K - 2 and struct.snr_kind == "rayleigh":
            jbar = _expect_terminal_rayleigh(
                struct.rayleigh_mean, struct.harvest_trans[s], grid, ng)
        else:
            jbar = _expect_tables(values[s + 1], struct.snr_trans[s],
                                  struct.harvest_trans[s], grid)
        for g in range(ng):
            for h in range(nh):
                val_row, tidx = _kernels.tscan(mi_rows[g], jbar[g, h])
                values[s, g, h] = val_row
                t_star[s, g, h] = battery[tidx]
    return ValueGrid(K=K, grid=grid, values=values), PolicyTable(K=K, grid=grid, t_star=t_star)


def optimize_slot(snr, b, value_next, tol=1e-9):
    """One-slot spend maximizing rate plus a concave value-to-go callable.

    Bisects on the sign of the centered difference of
    g(t) = mutual_info(snr, t) + value_next(b - t); the unconstrained
    stationary point is clipped to [0, b].  Returns (t, g(t)).  The spend
    lands within about tol of the true maximizer for tolerances down to
    roughly 1e-9, below which finite-difference noise dominates.
    """
    if b < 0.0:
        raise ValidationError(f"b must be nonnegative, got {b!r}")
    if tol <= 0.0:
        raise ValidationError(f"tol must be positive, got {tol!r}")
    snr = float(snr)

    def g(t):
        return mutual_info(snr, t) + float(value_next(b - t))

    if b == 0.0:
        return 0.0, g(0.0)
    h = max(tol, 1e-9)
    if b <= 4.0 * h:
        cand = np.linspace(0.0, b, 9)
        vals = [g(t) for t in cand]
        return float(cand[int(np.argmax(vals))]), float(max(vals))

    def slope_sign(t):
        return g(t + h) - g(t - h)

    if slope_sign(h) <= 0.0:
        return 0.0, g(0.0)
    if slope_sign(b - h) >= 0.0:
        return float(b), g(b)
    lo, hi = h, b - h
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if slope_sign(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    t = 0.5 * (lo + hi)
    return float(t), g(t)


def _nearest_idx(nodes, values):
    if len(nodes) == 1:
        return np.zeros(np.shape(values), dtype=np.int64)
    mid = 0.5 * (nodes[:-1] + nodes[1:])
    return np.searchsorted(mid, values)


def rollout_policy(policy, snr_real, harvest_real, b1_vec, h0):
    """Apply a policy table to realized paths; returns total bits per run.

    snr_real is (runs, K); harvest_real is (runs, K-1).  Discrete SI values
    are mapped to their grid nodes (nearest node for off-node values, which
    only happens for continuously distributed SNR); the battery coordinate
    is linearly interpolated.  The final slot spends the whole store.
    """
    grid = policy.grid
    K = policy.K
    battery = grid.battery
    tol = 1e-9 + 1e-9 * battery[-1]
    b = np.asarray(b1_vec, dtype=float).copy()
    runs = len(b)
    if np.any(b > battery[-1] + tol) or np.any(b < 0.0):
        raise ExtrapolationError(
            f"initial store outside the solved battery range [0, {battery[-1]}]")
    h_idx = np.full(runs, _nearest_idx(grid.harvest_nodes, h0))
    nh = len(grid.harvest_nodes)
    tput = np.zeros(runs)
    for s in range(K):
        gamma = snr_real[:, s]
        if s == K - 1:
            t = b.copy()
        else:
            g_idx = _nearest_idx(grid.snr_nodes, gamma)
            code = g_idx * nh + h_idx
            t = np.empty(runs)
            for c in np.unique(code):
                mask = code == c
                table = policy.t_star[s, c // nh, c % nh]
                t[mask] = np.interp(b[mask], battery, table)
            np.clip(t, 0.0, b, out=t)
        tput += np.log1p(t * gamma) / _kernels.LN2
        if s < K - 1:
            arrived = harvest_real[:, s]
            b = np.minimum(np.maximum(b - t, 0.0) + arrived, grid.bmax)
            if np.any(b > battery[-1] + tol):
                raise ExtrapolationError(
                    "battery left the solved range; rebuild the policy with a larger b_top")
            h_idx = _nearest_idx(grid.harvest_nodes, arrived)
    return tput


def evaluate_policy_throughput(model, policy, s1, runs, seed):
    """Monte Carlo value of a policy from a fixed first state.

    s1 is (snr1, h0, b1).  Side information after slot 1 is drawn from the
    model conditioned on s1.  Returns (mean_total_bits, std_err) over the
    horizon; a deterministic model gives zero spread.
    """
    snr1, h0, b1 = float(s1[0]), float(s1[1]), float(s1[2])
    K = policy.K
    if runs < 1:
        raise ValidationError(f"runs must be >= 1, got {runs!r}")
    root = np.random.SeedSequence(seed)
    snr_ss, harvest_ss = root.spawn(2)
    if K > 1:
        if model.snr.kind == "deterministic":
            if not math.isclose(model.snr.trace[0], snr1, rel_tol=0.0, abs_tol=1e-12):
                raise ValidationError(
                    f"s1 snr {snr1!r} does not match the deterministic trace start")
            future = np.tile(np.asarray(model.snr.trace[1:K]), (runs, 1))
        else:
            future = model.snr.sample_matrix(
                np.random.default_rng(snr_ss), runs, K - 1, start=snr1)
        snr_real = np.hstack([np.full((runs, 1), snr1), future])
        harvest_real = model.harvest.sample_matrix(
            np.random.default_rng(harvest_ss), runs, K - 1, start=h0)
    else:
        snr_real = np.full((runs, 1), snr1)
        harvest_real = np.zeros((runs, 0))
    tput = rollout_policy(policy, snr_real, harvest_real, np.full(runs, b1), h0)
    mean = float(tput.mean())
    se = float(tput.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0
    return mean, se


def save_policy(path, value_grid, policy):
    """Write tables and grid metadata to a versioned .npz file."""
    if value_grid.K != policy.K or value_grid.grid.battery.shape != policy.grid.battery.shape:
        raise ValidationError("value grid and policy table do not match")
    np.savez(
        path,
        format_version=np.int64(POLICY_FORMAT_VERSION),
        K=np.int64(policy.K),
        battery=policy.grid.battery,
        snr_nodes=policy.grid.snr_nodes,
        harvest_nodes=policy.grid.harvest_nodes,
        bmax=np.float64(policy.grid.bmax),
        values=value_grid.values,
        t_star=policy.t_star,
    )


def load_policy(path):
    """Read tables back; returns (ValueGrid, PolicyTable)."""
    with np.load(path, allow_pickle=False) as data:
        try:
            version = int(data["format_version"])
            if version != POLICY_FORMAT_VERSION:
                raise ValidationError(
                    f"policy file format {version} not supported "
                    f"(expected {POLICY_FORMAT_VERSION})")
            grid = StateGrid(
                battery=data["battery"],
                snr_nodes=data["snr_nodes"],
                harvest_nodes=data["harvest_nodes"],
                bmax=float(data["bmax"]),
            )
            K = int(data["K"])
            values = data["values"]
            t_star = data["t_star"]
        except KeyError as exc:
            raise ValidationError(f"policy file is missing field {exc}") from exc
    shape = (K, len(grid.snr_nodes), len(grid.harvest_nodes), len(grid.battery))
    if values.shape != shape or t_star.shape != shape:
        raise ValidationError(
            f"policy tables have shape {values.shape}, grid implies {shape}")
    return ValueGrid(K=K, grid=grid, values=values), PolicyTable(K=K, grid=grid, t_star=t_star)


def check_policy_matches(policy, model, K, bmax, snr_quad_nodes=32):
    """Raise ValidationError when a policy cannot serve a model."""
    if policy.K != K:
        raise ValidationError(f"policy was built for K={policy.K}, run asks K={K}")
    if not math.isclose(policy.grid.bmax, bmax, rel_tol=1e-12, abs_tol=1e-12) and not (
            math.isinf(policy.grid.bmax) and math.isinf(bmax)):
        raise ValidationError(
            f"policy was built for bmax={policy.grid.bmax}, run asks bmax={bmax}")
    struct = build_structure(model, K, snr_quad_nodes=max(2, len(policy.grid.snr_nodes)))
    if len(struct.snr_nodes) != len(policy.grid.snr_nodes) or not np.allclose(
            struct.snr_nodes, policy.grid.snr_nodes, rtol=1e-9, atol=1e-12):
        raise ValidationError("policy snr nodes do not match the model's support")
    if len(struct.harvest_nodes) != len(policy.grid.harvest_nodes) or not np.allclose(
            struct.harvest_nodes, policy.grid.harvest_nodes, rtol=1e-9, atol=1e-12):
        raise ValidationError("policy harvest nodes do not match the model's support")
