"""Monte Carlo evaluation of allocation schemes.

All schemes evaluated under one seed see identical side-information
draws: the root seed is split into fixed-order child streams (snr,
harvest, initial store), so scheme comparisons are paired and sweep
cells share harvest paths.  Reports carry mean bits per slot with a
standard error, and optionally the per-run samples for paired tests.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels, dp_causal
from .channel import db_to_linear, linear_to_db
from .errors import ValidationError
from .si_models import AwgnProcess, DiscreteDist, RayleighProcess, StochasticModel

__all__ = ["SCHEMES", "SimReport", "run_experiment", "sweep",
           "write_csv", "reports_to_json"]

SCHEMES = ("naive", "half", "causal-dp", "full-si")

CSV_HEADER = ("scheme", "K", "snr_db", "runs", "mean_bits_per_slot", "std_err", "seed")


@dataclass(frozen=True)
class SimReport:
    scheme: str
    K: int
    snr_db: float
    runs: int
    mean_bits_per_slot: float
    std_err: float
    seed: int
    samples: np.ndarray | None = None

    def row(self):
        return (self.scheme, str(self.K), repr(self.snr_db), str(self.runs),
                repr(self.mean_bits_per_slot), repr(self.std_err), str(self.seed))


def _draw_paths(model, K, runs, seed, bmax):
    root = np.random.SeedSequence(seed)
    snr_ss, harvest_ss, b1_ss = root.spawn(3)
    snr = model.snr.sample_matrix(np.random.default_rng(snr_ss), runs, K,
                                  start=model.snr0)
    harvest = model.harvest.sample_matrix(np.random.default_rng(harvest_ss),
                                          runs, K - 1, start=model.h0)
    if isinstance(model.b1, DiscreteDist):
        idx = model.b1.sample_index(np.random.default_rng(b1_ss), runs)
        b1 = np.asarray(model.b1.support, dtype=float)[idx]
    else:
        b1 = np.full(runs, float(model.b1))
    b1 = np.minimum(b1, bmax)
    return snr, harvest, b1


def _heuristic_batch(scheme, snr, harvest, b1, bmax, K):
    b = b1.copy()
    bits = np.zeros(len(b1))
    for k in range(K):
        t = b if k == K - 1 or scheme == "naive" else 0.5 * b
        bits += np.log1p(t * snr[:, k]) / _kernels.LN2
        if k < K - 1:
            b = np.minimum(b - t + harvest[:, k], bmax)
    return bits


def run_experiment(model, scheme, K, runs, seed, bmax=math.inf, policy=None,
                   eps=1e-9, keep_samples=False):
    """Estimate mean bits per slot for one scheme under one model.

    causal-dp requires a solved PolicyTable built for the same model,
    horizon, and cap.  full-si solves each realized path offline and
    needs an unbounded store.
    """
    if not isinstance(model, StochasticModel):
        raise ValidationError("expected a StochasticModel")
    if scheme not in SCHEMES:
        raise ValidationError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    if not isinstance(K, int) or K < 1:
        raise ValidationError(f"K must be a positive integer, got {K!r}")
    if not isinstance(runs, int) or runs < 1:
        raise ValidationError(f"runs must be a positive integer, got {runs!r}")
    if seed is None:
        raise ValidationError("seed is required so reports can be reproduced")

    snr, harvest, b1 = _draw_paths(model, K, runs, seed, bmax)
    if scheme in ("naive", "half"):
        bits = _heuristic_batch(scheme, snr, harvest, b1, bmax, K)
    elif scheme == "full-si":
        if not math.isinf(bmax):
            raise ValidationError(
                "full-si simulation assumes an unbounded store; "
                "solve bounded scenarios one at a time with dp_full_finite_bmax")
        cum = np.concatenate(
            [np.zeros((runs, 1)), b1[:, None] + np.concatenate(
                [np.zeros((runs, 1)), np.cumsum(harvest, axis=1)], axis=1)], axis=1)
        alloc = _kernels.mc_fullsi_alloc(
            np.ascontiguousarray(snr), np.ascontiguousarray(cum), eps)
        bits = np.sum(np.log1p(alloc * snr), axis=1) / _kernels.LN2
    else:
        if policy is None:
            raise ValidationError("causal-dp needs a policy; build one with dp_causal.solve")
        dp_causal.check_policy_matches(policy, model, K, bmax)
        bits = dp_causal.rollout_policy(policy, snr, harvest, b1, model.h0)

    per_slot = bits / K
    mean = float(per_slot.mean())
    se = float(per_slot.std(ddof=1) / math.sqrt(runs)) if runs > 1 else 0.0
    m = model.mean_snr()
    snr_db = linear_to_db(m) if m > 0 else float("nan")
    return SimReport(scheme=scheme, K=K, snr_db=snr_db, runs=runs,
                     mean_bits_per_slot=mean, std_err=se, seed=seed,
                     samples=per_slot if keep_samples else None)


def sweep(model_template, scheme, k_list, snr_db_list, runs, seed,
          bmax=math.inf, delta_b=0.01, snr_quad_nodes=32, eps=1e-9):
    """Run one scheme over a grid of horizons and mean-SNR levels.

    The template's channel is rescaled per snr_db cell, so it must be an
    awgn or rayleigh process.  Every cell reuses the same seed, which
    pins the harvest and initial-store draws across cells and makes the
    curves comparable point by point.  causal-dp policies are solved per
    cell.  Returns a list of SimReport in (snr_db, K) order.
    """
    if model_template.snr.kind not in ("awgn", "rayleigh"):
        raise ValidationError(
            "sweep rescales the channel mean; the template snr process must "
            f"be awgn or rayleigh, got {model_template.snr.kind!r}")
    if len(k_list) == 0 or len(snr_db_list) == 0:
        raise ValidationError("k_list and snr_db_list must be nonempty")
    reports = []
    for snr_db in snr_db_list:
        mean = db_to_linear(float(snr_db))
        proc = AwgnProcess(mean=mean) if model_template.snr.kind == "awgn" \
            else RayleighProcess(mean=mean)
        model = replace(model_template, snr=proc)
        for K in k_list:
            policy = None
            if scheme == "causal-dp":
                _, policy = dp_causal.solve(model, int(K), bmax=bmax,
                                            delta_b=delta_b,
                                            snr_quad_nodes=snr_quad_nodes)
            reports.append(run_experiment(model, scheme, int(K), runs, seed,
                                          bmax=bmax, policy=policy, eps=eps))
    return reports


def write_csv(reports, dest):
    """Write reports as CSV; identical inputs give identical bytes."""
    if hasattr(dest, "write"):
        _write_csv_file(reports, dest)
        return
    with open(dest, "w", newline="") as fh:
        _write_csv_file(reports, fh)


def _write_csv_file(reports, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow(r.row())


def reports_to_json(reports):
    return [
        {
            "scheme": r.scheme, "K": r.K, "snr_db": r.snr_db, "runs": r.runs,
            "mean_bits_per_slot": r.mean_bits_per_slot,
            "std_err": r.std_err, "seed": r.seed,
        }
        for r in reports
    ]
