"""Shared generators for randomized tests."""

import math

import numpy as np

from ehalloc.si_models import Scenario


def random_scenario(rng, k_choices=(2, 3, 4), bmax_mode="inf",
                    snr_lo=0.1, snr_hi=10.0, e_hi=2.0):
    """Random feasible scenario with positive SNRs.

    bmax_mode: "inf", "finite", or "mixed".
    """
    K = int(rng.choice(k_choices))
    b1 = float(rng.uniform(0.0, e_hi))
    harvest = tuple(float(x) for x in rng.uniform(0.0, e_hi, K - 1))
    snr = tuple(float(x) for x in rng.uniform(snr_lo, snr_hi, K))
    if bmax_mode == "inf":
        bmax = math.inf
    elif bmax_mode == "finite":
        bmax = b1 + float(rng.uniform(0.0, e_hi))
    else:
        bmax = math.inf if rng.uniform() < 0.5 else b1 + float(rng.uniform(0.0, e_hi))
    return Scenario(K=K, b1=b1, bmax=bmax, snr=snr, harvest=harvest)


def throughput(snr, alloc):
    return float(np.sum(np.log1p(np.asarray(alloc) * np.asarray(snr))) / math.log(2.0))
