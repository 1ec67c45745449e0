"""Command-line front end.

Subcommands cover the two solver families (solve-full, solve-k2), policy
construction (build-policy), Monte Carlo evaluation (simulate, sweep),
and a randomized self-check against the exhaustive reference (verify).

Exit codes: 0 on success, 1 when a numerical check or bound fails,
2 for invalid inputs or arguments.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import dp_causal, fullsi, oracle, sim
from ._kernels import LN2
from .errors import DomainError, EhallocError, ValidationError
from .si_models import Scenario, StochasticModel, replay_allocation

__all__ = ["main", "build_parser"]


def _load_json(path, what):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read {what} file {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{what} file {path!r} is not valid JSON: {exc}") from exc


def _load_scenario(path):
    return Scenario.from_json(_load_json(path, "scenario"))


def _load_model(path):
    return StochasticModel.from_json(_load_json(path, "model"))


def _emit(obj, args):
    text = json.dumps(obj, indent=2)
    if getattr(args, "out", None):
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _parse_float_list(text, what):
    try:
        values = [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise ValidationError(f"cannot parse {what} {text!r}: {exc}") from exc
    if not values:
        raise ValidationError(f"{what} is empty")
    return values


def _cmd_solve_full(args):
    sc = _load_scenario(args.scenario)
    if math.isinf(sc.bmax):
        res = fullsi.staircase_waterfill(sc, eps=args.eps)
        _emit(res.to_dict(), args)
        return 0
    if args.grid_step is None:
        raise ValidationError(
            "scenario has a finite Bmax; pass --grid-step to solve it on a battery grid")
    res = fullsi.dp_full_finite_bmax(sc, delta_b=args.grid_step, eps=args.eps)
    _emit({
        "allocation": list(res.allocation),
        "throughput_bits": res.throughput_bits,
        "delta_b": res.delta_b,
    }, args)
    return 0


def _cmd_solve_k2(args):
    sc = _load_scenario(args.scenario)
    t1, mode = fullsi.closed_form_k2(sc)
    alloc = fullsi.k2_allocation(sc, t1)
    snr = sc.snr_array()
    tput = float(np.sum(np.log1p(np.asarray(alloc) * snr)) / LN2)
    _emit({
        "t1": t1,
        "mode": mode,
        "allocation": list(alloc),
        "throughput_bits": tput,
    }, args)
    return 0


def _cmd_build_policy(args):
    model = _load_model(args.model)
    values, policy = dp_causal.solve(
        model, args.horizon, bmax=args.bmax, delta_b=args.delta_b,
        snr_quad_nodes=args.quad_nodes, b_top=args.b_top)
    dp_causal.save_policy(args.out, values, policy)
    grid = policy.grid
    print(f"wrote {args.out}: K={args.horizon}, battery grid "
          f"{len(grid.battery)} x {len(grid.snr_nodes)} snr x "
          f"{len(grid.harvest_nodes)} harvest states", file=sys.stderr)
    return 0


def _cmd_simulate(args):
    model = _load_model(args.model)
    policy = None
    if args.scheme == "causal-dp":
        if args.policy is None:
            raise ValidationError("scheme causal-dp needs --policy (see build-policy)")
        _, policy = dp_causal.load_policy(args.policy)
    report = sim.run_experiment(model, args.scheme, args.horizon, args.runs,
                                args.seed, bmax=args.bmax, policy=policy,
                                eps=args.eps)
    _write_reports([report], args)
    return 0


def _cmd_sweep(args):
    model = _load_model(args.model)
    reports = sim.sweep(model, args.scheme,
                        k_list=[int(k) for k in _parse_float_list(args.k_list, "--k-list")],
                        snr_db_list=_parse_float_list(args.snr_db_list, "--snr-db-list"),
                        runs=args.runs, seed=args.seed, bmax=args.bmax,
                        delta_b=args.delta_b, snr_quad_nodes=args.quad_nodes,
                        eps=args.eps)
    _write_reports(reports, args)
    return 0


def _write_reports(reports, args):
    if args.out:
        sim.write_csv(reports, args.out)
    else:
        sim.write_csv(reports, sys.stdout)


def _cmd_verify(args):
    rng = np.random.default_rng(args.seed)
    cfg = oracle.GridSearchConfig(t_step=args.t_step)
    failures = 0

    worst = 0.0
    for _ in range(args.trials):
        K = int(rng.integers(1, 4))
        b1 = float(rng.uniform(0.0, 2.0))
        harvest = tuple(rng.uniform(0.0, 2.0, K - 1))
        snr = tuple(rng.uniform(0.1, 10.0, K))
        sc = Scenario(K=K, b1=b1, bmax=math.inf, snr=snr, harvest=harvest)
        res = fullsi.staircase_waterfill(sc)
        _, tput_b = oracle.brute_force_fullsi(sc, cfg)
        replay_allocation(sc, res.allocation, tol=1e-7)
        slope = float(np.sum(snr)) / LN2
        bound = slope * (cfg.t_step + K * res.eps) + 1e-9
        low_ok = res.throughput_bits >= tput_b - 1e-9
        high_ok = res.throughput_bits <= tput_b + bound
        if not (low_ok and high_ok):
            failures += 1
        worst = max(worst, abs(res.throughput_bits - tput_b))
    print(f"staircase vs exhaustive lattice: {args.trials} random instances, "
          f"max |gap| {worst:.3e} -> {'PASS' if failures == 0 else 'FAIL'}")

    worst_k2 = 0.0
    k2_failures = 0
    for _ in range(args.trials):
        b1 = float(rng.uniform(0.05, 2.0))
        h1 = float(rng.uniform(0.0, 2.0))
        bmax = math.inf if rng.uniform() < 0.5 else b1 + float(rng.uniform(0.0, 2.0))
        snr = tuple(rng.uniform(0.1, 10.0, 2))
        sc = Scenario(K=2, b1=b1, bmax=bmax, snr=snr, harvest=(h1,))
        t1, _ = fullsi.closed_form_k2(sc)
        alloc = fullsi.k2_allocation(sc, t1)
        tput_cf = float(np.sum(np.log1p(np.asarray(alloc) * np.asarray(snr))) / LN2)
        grid = fullsi.dp_full_finite_bmax(sc, delta_b=1e-3)
        gap = abs(tput_cf - grid.throughput_bits)
        worst_k2 = max(worst_k2, gap)
        if gap > 1e-2 or tput_cf < grid.throughput_bits - 1e-9:
            k2_failures += 1
    print(f"two-slot closed form vs battery-grid solver: {args.trials} random "
          f"instances, max |gap| {worst_k2:.3e} -> "
          f"{'PASS' if k2_failures == 0 else 'FAIL'}")

    return 1 if failures or k2_failures else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ehalloc",
        description="Transmit-energy allocation for an energy-harvesting link.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_out(p):
        p.add_argument("--out", default=None, help="write output to this file instead of stdout")

    p = sub.add_parser("solve-full", help="optimal allocation for a fully known scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file, or - for stdin")
    p.add_argument("--eps", type=float, default=1e-9, help="water-level tolerance")
    p.add_argument("--grid-step", type=float, default=None,
                   help="battery grid step, required when Bmax is finite")
    add_common_out(p)
    p.set_defaults(func=_cmd_solve_full)

    p = sub.add_parser("solve-k2", help="closed-form allocation for a two-slot scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON file, or - for stdin")
    add_common_out(p)
    p.set_defaults(func=_cmd_solve_k2)

    p = sub.add_parser("build-policy", help="solve the causal dynamic program, save tables")
    p.add_argument("--model", required=True, help="model JSON file, or - for stdin")
    p.add_argument("--horizon", "-k", type=int, required=True, help="number of slots K")
    p.add_argument("--bmax", type=float, default=math.inf, help="battery cap (default inf)")
    p.add_argument("--delta-b", type=float, default=0.01, help="battery grid step")
    p.add_argument("--quad-nodes", type=int, default=32,
                   help="quadrature nodes for a rayleigh channel")
    p.add_argument("--b-top", type=float, default=None,
                   help="extend the battery grid at least this far")
    p.add_argument("--out", required=True, help="output .npz path")
    p.set_defaults(func=_cmd_build_policy)

    p = sub.add_parser("simulate", help="Monte Carlo evaluation of one scheme")
    p.add_argument("--model", required=True, help="model JSON file, or - for stdin")
    p.add_argument("--scheme", required=True, choices=sim.SCHEMES)
    p.add_argument("--horizon", "-k", type=int, required=True, help="number of slots K")
    p.add_argument("--runs", type=int, required=True, help="Monte Carlo sample size")
    p.add_argument("--seed", type=int, required=True, help="root seed (results are reproducible)")
    p.add_argument("--bmax", type=float, default=math.inf, help="battery cap (default inf)")
    p.add_argument("--policy", default=None, help=".npz from build-policy (causal-dp only)")
    p.add_argument("--eps", type=float, default=1e-9, help="water-level tolerance")
    add_common_out(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="simulate one scheme over horizons x mean-SNR levels")
    p.add_argument("--model", required=True, help="template model JSON (awgn or rayleigh)")
    p.add_argument("--scheme", required=True, choices=sim.SCHEMES)
    p.add_argument("--k-list", required=True, help="comma-separated horizons, e.g. 1,2,4")
    p.add_argument("--snr-db-list", required=True, help="comma-separated dB levels, e.g. 0,10,20")
    p.add_argument("--runs", type=int, required=True, help="Monte Carlo sample size per cell")
    p.add_argument("--seed", type=int, required=True, help="root seed, shared across cells")
    p.add_argument("--bmax", type=float, default=math.inf, help="battery cap (default inf)")
    p.add_argument("--delta-b", type=float, default=0.01,
                   help="battery grid step for causal-dp policies")
    p.add_argument("--quad-nodes", type=int, default=32,
                   help="quadrature nodes for a rayleigh channel")
    p.add_argument("--eps", type=float, default=1e-9, help="water-level tolerance")
    add_common_out(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("verify", help="randomized self-check against exhaustive search")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--t-step", type=float, default=1e-3, help="search lattice step")
    p.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EhallocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
