"""Baseline spend rules that need no optimization.

Both are feasible by construction for any harvest sequence and battery
cap, which makes them the reference floor in simulation sweeps.
"""

from __future__ import annotations

import math

from .errors import ValidationError

__all__ = ["NAIVE", "POWER_HALVING", "decide"]

NAIVE = "naive"
POWER_HALVING = "half"


def decide(policy, k, K, b):
    """Spend for slot k (1-based) of K given current stored energy b.

    naive: drain the store every slot.
    half: spend half the store, except the final slot drains it.
    """
    if not isinstance(k, int) or not isinstance(K, int):
        raise ValidationError(f"k and K must be integers, got {k!r}, {K!r}")
    if K < 1 or not 1 <= k <= K:
        raise ValidationError(f"slot index k={k} outside 1..{K}")
    if not math.isfinite(b) or b < 0.0:
        raise ValidationError(f"stored energy must be finite and nonnegative, got {b!r}")
    if policy == NAIVE:
        return float(b)
    if policy == POWER_HALVING:
        return float(b) if k == K else 0.5 * float(b)
    raise ValidationError(f"unknown heuristic {policy!r}")
