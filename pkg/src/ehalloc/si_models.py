"""Scenarios, side-information processes, and battery dynamics.

A Scenario pins down one realized problem instance: horizon, initial store,
battery cap, per-slot SNRs, and the harvest arriving at the end of each
slot but the last.  A StochasticModel describes how such instances are
drawn: one process for the SNR, one for the harvest, a distribution (or
fixed value) for the initial store, and the harvest reading h0 observed
before the first slot.

Process kinds:

* deterministic -- a fixed trace, one value per slot
* iid           -- independent draws from a finite distribution
* markov        -- first-order chain on a finite support
* awgn          -- constant SNR at its mean (SNR processes only)
* rayleigh      -- exponentially distributed SNR around a mean (SNR only)

SNR and harvest evolve independently of each other.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, InfeasibleAllocationError, ValidationError

__all__ = [
    "DiscreteDist",
    "DeterministicProcess",
    "IidProcess",
    "MarkovProcess",
    "AwgnProcess",
    "RayleighProcess",
    "Process",
    "StochasticModel",
    "Scenario",
    "battery_step",
    "sample_scenario",
    "reference_model",
]


def _check_nonneg_finite(values, name):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValidationError(f"{name} must not be empty")
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0):
        raise ValidationError(f"{name} must be finite and nonnegative, got {values!r}")
    return arr


@dataclass(frozen=True)
class DiscreteDist:
    """Finite distribution over nonnegative values."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        sup = _check_nonneg_finite(self.support, "support")
        pr = np.asarray(self.probs, dtype=float)
        if len(sup) != len(pr):
            raise ValidationError("support and probs must have the same length")
        if np.any(pr < 0.0) or abs(pr.sum() - 1.0) > 1e-9:
            raise ValidationError(f"probs must be nonnegative and sum to 1, got {self.probs!r}")
        if len(set(float(v) for v in sup)) != len(sup):
            raise ValidationError("support values must be distinct")
        object.__setattr__(self, "support", tuple(float(v) for v in sup))
        object.__setattr__(self, "probs", tuple(float(p) for p in pr))

    @classmethod
    def uniform(cls, support):
        n = len(support)
        return cls(tuple(support), tuple([1.0 / n] * n))

    @property
    def mean(self):
        return float(np.dot(self.support, self.probs))

    def sample_index(self, rng, size):
        return rng.choice(len(self.support), size=size, p=np.asarray(self.probs))


@dataclass(frozen=True)
class DeterministicProcess:
    """Fixed per-slot trace."""

    trace: tuple
    kind = "deterministic"

    def __post_init__(self):
        arr = _check_nonneg_finite(self.trace, "trace")
        object.__setattr__(self, "trace", tuple(float(v) for v in arr))

    def mean_value(self):
        return float(np.mean(self.trace))

    def sample_matrix(self, rng, runs, n, start=None):
        if n > len(self.trace):
            raise ValidationError(
                f"deterministic trace has {len(self.trace)} values, {n} needed")
        return np.tile(np.asarray(self.trace[:n]), (runs, 1))


@dataclass(frozen=True)
class IidProcess:
    """Independent draws from a finite distribution each slot."""

    dist: DiscreteDist
    kind = "iid"

    def mean_value(self):
        return self.dist.mean

    def sample_matrix(self, rng, runs, n, start=None):
        sup = np.asarray(self.dist.support)
        idx = self.dist.sample_index(rng, (runs, n))
        return sup[idx]


@dataclass(frozen=True)
class MarkovProcess:
    """First-order chain: kernel[i, j] = P(next = support[j] | cur = support[i])."""

    support: tuple
    kernel: tuple
    kind = "markov"

    def __post_init__(self):
        sup = _check_nonneg_finite(self.support, "support")
        ker = np.asarray(self.kernel, dtype=float)
        if ker.shape != (len(sup), len(sup)):
            raise ValidationError(
                f"kernel must be {len(sup)}x{len(sup)}, got shape {ker.shape}")
        if np.any(ker < 0.0) or np.any(np.abs(ker.sum(axis=1) - 1.0) > 1e-9):
            raise ValidationError("kernel rows must be nonnegative and sum to 1")
        if len(set(float(v) for v in sup)) != len(sup):
            raise ValidationError("support values must be distinct")
        object.__setattr__(self, "support", tuple(float(v) for v in sup))
        object.__setattr__(self, "kernel", tuple(tuple(float(p) for p in row) for row in ker))

    def mean_value(self):
        return float(np.mean(self.support))

    def state_index(self, value):
        sup = np.asarray(self.support)
        hit = np.nonzero(np.isclose(sup, value, rtol=0.0, atol=1e-12))[0]
        if len(hit) == 0:
            raise ValidationError(
                f"value {value!r} is not in the chain support {self.support!r}")
        return int(hit[0])

    def sample_matrix(self, rng, runs, n, start=None):
        if start is None:
            raise ValidationError("markov sampling needs the state seen before the first draw")
        sup = np.asarray(self.support)
        ker = np.asarray(self.kernel)
        cum = np.cumsum(ker, axis=1)
        state = np.full(runs, self.state_index(start))
        out = np.empty((runs, n))
        for j in range(n):
            u = rng.random(runs)
            state = (u[:, None] > cum[state]).sum(axis=1)
            out[:, j] = sup[state]
        return out


@dataclass(frozen=True)
class AwgnProcess:
    """Constant SNR at its mean."""

    mean: float
    kind = "awgn"

    def __post_init__(self):
        arr = _check_nonneg_finite([self.mean], "mean")
        object.__setattr__(self, "mean", float(arr[0]))

    def mean_value(self):
        return self.mean

    def sample_matrix(self, rng, runs, n, start=None):
        return np.full((runs, n), self.mean)


@dataclass(frozen=True)
class RayleighProcess:
    """SNR exponentially distributed around a mean, independent per slot."""

    mean: float
    kind = "rayleigh"

    def __post_init__(self):
        arr = _check_nonneg_finite([self.mean], "mean")
        if arr[0] == 0.0:
            raise ValidationError("rayleigh mean SNR must be positive")
        object.__setattr__(self, "mean", float(arr[0]))

    def mean_value(self):
        return self.mean

    def sample_matrix(self, rng, runs, n, start=None):
        return rng.exponential(self.mean, size=(runs, n))


Process = Union[DeterministicProcess, IidProcess, MarkovProcess, AwgnProcess, RayleighProcess]

_SNR_KINDS = {"deterministic", "iid", "markov", "awgn", "rayleigh"}
_HARVEST_KINDS = {"deterministic", "iid", "markov"}


@dataclass(frozen=True)
class StochasticModel:
    """Joint description of how scenarios are drawn.

    b1 may be a fixed number or a DiscreteDist; h0 is the harvest reading
    observed before slot 1 (it seeds markov conditioning and the first
    decision state).
    """

    snr: Process
    harvest: Process
    b1: Union[float, DiscreteDist] = 0.0
    h0: float = 0.0
    snr0: Union[float, None] = None

    def __post_init__(self):
        if self.snr.kind not in _SNR_KINDS:
            raise ValidationError(f"unsupported snr process kind {self.snr.kind!r}")
        if self.harvest.kind not in _HARVEST_KINDS:
            raise ValidationError(
                f"harvest process must be one of {sorted(_HARVEST_KINDS)}, got {self.harvest.kind!r}")
        if not isinstance(self.b1, DiscreteDist):
            b1 = _check_nonneg_finite([self.b1], "b1")[0]
            object.__setattr__(self, "b1", float(b1))
        h0 = _check_nonneg_finite([self.h0], "h0")[0]
        object.__setattr__(self, "h0", float(h0))
        if self.harvest.kind == "markov":
            self.harvest.state_index(self.h0)  # h0 must live on the chain
        if self.snr.kind == "markov":
            if self.snr0 is None:
                raise ValidationError("markov snr process needs snr0 (SNR seen before slot 1)")
            self.snr.state_index(self.snr0)
        elif self.snr0 is not None:
            object.__setattr__(self, "snr0", float(self.snr0))

    def mean_snr(self):
        return self.snr.mean_value()

    def to_json(self):
        return json.dumps(_model_to_dict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, data):
        """Build from a JSON string or an already-parsed mapping."""
        if isinstance(data, (str, bytes)):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"model file is not valid JSON: {exc}") from exc
        return _model_from_dict(data)


def _process_to_dict(proc):
    if proc.kind == "deterministic":
        return {"kind": "deterministic", "trace": list(proc.trace)}
    if proc.kind == "iid":
        return {"kind": "iid", "support": list(proc.dist.support), "probs": list(proc.dist.probs)}
    if proc.kind == "markov":
        return {"kind": "markov", "support": list(proc.support),
                "kernel": [list(row) for row in proc.kernel]}
    if proc.kind == "awgn":
        return {"kind": "awgn", "mean": proc.mean}
    if proc.kind == "rayleigh":
        return {"kind": "rayleigh", "mean": proc.mean}
    raise ValidationError(f"unknown process kind {proc.kind!r}")


def _process_from_dict(raw, field_name):
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ValidationError(f"{field_name} must be an object with a 'kind' tag")
    kind = raw["kind"]
    try:
        if kind == "deterministic":
            return DeterministicProcess(tuple(raw["trace"]))
        if kind == "iid":
            return IidProcess(DiscreteDist(tuple(raw["support"]), tuple(raw["probs"])))
        if kind == "markov":
            return MarkovProcess(tuple(raw["support"]),
                                 tuple(tuple(row) for row in raw["kernel"]))
        if kind == "awgn":
            return AwgnProcess(float(raw["mean"]))
        if kind == "rayleigh":
            return RayleighProcess(float(raw["mean"]))
    except KeyError as exc:
        raise ValidationError(f"{field_name}: missing field {exc} for kind {kind!r}") from exc
    raise ValidationError(f"{field_name}: unknown process kind {kind!r}")


def _model_to_dict(model):
    out = {
        "snr": _process_to_dict(model.snr),
        "harvest": _process_to_dict(model.harvest),
        "h0": model.h0,
    }
    if isinstance(model.b1, DiscreteDist):
        out["b1"] = {"support": list(model.b1.support), "probs": list(model.b1.probs)}
    else:
        out["b1"] = model.b1
    if model.snr0 is not None:
        out["snr0"] = model.snr0
    return out


def _model_from_dict(raw):
    if not isinstance(raw, dict):
        raise ValidationError("model file must hold a JSON object")
    for key in ("snr", "harvest"):
        if key not in raw:
            raise ValidationError(f"model file is missing the {key!r} field")
    unknown = sorted(set(raw) - {"snr", "harvest", "b1", "h0", "snr0"})
    if unknown:
        raise ValidationError(
            f"model file has unrecognized fields: {', '.join(unknown)} "
            "(expected snr, harvest, b1, h0, snr0)")
    b1_raw = raw.get("b1", 0.0)
    if isinstance(b1_raw, dict):
        try:
            b1 = DiscreteDist(tuple(b1_raw["support"]), tuple(b1_raw["probs"]))
        except KeyError as exc:
            raise ValidationError(f"b1: missing field {exc}") from exc
    else:
        b1 = b1_raw
    snr0 = raw.get("snr0")
    try:
        return StochasticModel(
            snr=_process_from_dict(raw["snr"], "snr"),
            harvest=_process_from_dict(raw["harvest"], "harvest"),
            b1=b1 if isinstance(b1, DiscreteDist) else float(b1),
            h0=float(raw.get("h0", 0.0)),
            snr0=None if snr0 is None else float(snr0),
        )
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"model file: {exc}") from exc


@dataclass(frozen=True)
class Scenario:
    """One realized instance: horizon, energies, and per-slot SNRs.

    snr has one entry per slot; harvest has K-1 entries, harvest[k-1] being
    the energy that lands at the end of slot k.  bmax may be math.inf.
    """

    K: int
    b1: float
    bmax: float
    snr: tuple
    harvest: tuple
    h0: float = 0.0

    def __post_init__(self):
        if not isinstance(self.K, int) or self.K < 1:
            raise ValidationError(f"K must be a positive integer, got {self.K!r}")
        b1 = _check_nonneg_finite([self.b1], "B1")[0]
        if not (isinstance(self.bmax, (int, float)) and (math.isinf(self.bmax) or self.bmax >= 0)):
            raise ValidationError(f"Bmax must be nonnegative or infinite, got {self.bmax!r}")
        if b1 > self.bmax:
            raise ValidationError(f"B1={b1} exceeds Bmax={self.bmax}")
        snr = _check_nonneg_finite(self.snr, "snr")
        if len(snr) != self.K:
            raise ValidationError(f"snr must have K={self.K} entries, got {len(snr)}")
        if self.K > 1:
            harvest = _check_nonneg_finite(self.harvest, "harvest")
            if len(harvest) != self.K - 1:
                raise ValidationError(
                    f"harvest must have K-1={self.K - 1} entries, got {len(self.harvest)}")
        else:
            if len(self.harvest) != 0:
                raise ValidationError("harvest must be empty when K=1")
            harvest = np.zeros(0)
        h0 = _check_nonneg_finite([self.h0], "h0")[0]
        object.__setattr__(self, "b1", float(b1))
        object.__setattr__(self, "bmax", float(self.bmax))
        object.__setattr__(self, "snr", tuple(float(v) for v in snr))
        object.__setattr__(self, "harvest", tuple(float(v) for v in harvest))
        object.__setattr__(self, "h0", float(h0))

    def snr_array(self):
        return np.asarray(self.snr)

    def harvest_array(self):
        return np.asarray(self.harvest)

    def cumulative_energy(self):
        """cum[k] = total energy available through slot k; cum[0] = 0."""
        out = np.zeros(self.K + 1)
        out[1] = self.b1
        if self.K > 1:
            out[2:] = self.b1 + np.cumsum(self.harvest_array())
        return out

    def to_json(self):
        d = {
            "K": self.K,
            "B1": self.b1,
            "Bmax": "inf" if math.isinf(self.bmax) else self.bmax,
            "snr": list(self.snr),
            "harvest": list(self.harvest),
            "h0": self.h0,
        }
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, data):
        """Build from a JSON string or an already-parsed mapping."""
        if isinstance(data, (str, bytes)):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"scenario file is not valid JSON: {exc}") from exc
        raw = data
        if not isinstance(raw, dict):
            raise ValidationError("scenario file must hold a JSON object")
        missing = [k for k in ("K", "B1", "Bmax", "snr", "harvest") if k not in raw]
        if missing:
            raise ValidationError(f"scenario file is missing fields: {', '.join(missing)}")
        unknown = sorted(set(raw) - {"K", "B1", "Bmax", "snr", "harvest", "h0"})
        if unknown:
            raise ValidationError(
                f"scenario file has unrecognized fields: {', '.join(unknown)} "
                "(expected K, B1, Bmax, snr, harvest, h0)")
        bmax_raw = raw["Bmax"]
        if bmax_raw == "inf":
            bmax = math.inf
        elif isinstance(bmax_raw, (int, float)):
            bmax = float(bmax_raw)
        else:
            raise ValidationError(f"Bmax must be a number or \"inf\", got {bmax_raw!r}")
        if not isinstance(raw["K"], int):
            raise ValidationError(f"K must be an integer, got {raw['K']!r}")
        try:
            return cls(
                K=raw["K"],
                b1=float(raw["B1"]),
                bmax=bmax,
                snr=tuple(raw["snr"]),
                harvest=tuple(raw["harvest"]),
                h0=float(raw.get("h0", 0.0)),
            )
        except ValidationError:
            raise
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"scenario file: {exc}") from exc


def battery_step(b, t, h, bmax, tol=0.0):
    """Battery level after spending t and then harvesting h: min(b - t + h, bmax).

    Raises InfeasibleAllocationError when t is negative or exceeds b by more
    than tol.  The small pre-harvest residue is clamped at zero so rounding
    in t can never push the returned level negative.
    """
    b_arr = np.asarray(b, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    h_arr = np.asarray(h, dtype=float)
    if np.any(t_arr < 0.0):
        raise InfeasibleAllocationError(f"negative spend t={t!r}")
    if np.any(t_arr > b_arr + tol):
        raise InfeasibleAllocationError(f"spend t={t!r} exceeds stored energy b={b!r}")
    if np.any(h_arr < 0.0):
        raise DomainError(f"harvest must be nonnegative, got {h!r}")
    out = np.minimum(np.maximum(b_arr - t_arr, 0.0) + h_arr, bmax)
    return float(out) if out.ndim == 0 else out


def sample_scenario(model, K, b1=None, bmax=math.inf, seed=None):
    """Draw one Scenario from a StochasticModel.

    b1 overrides the model's initial-store setting when given.  seed may be
    an int or a numpy Generator.
    """
    if not isinstance(K, int) or K < 1:
        raise ValidationError(f"K must be a positive integer, got {K!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    snr = model.snr.sample_matrix(rng, 1, K, start=model.snr0)[0]
    if K > 1:
        harvest = model.harvest.sample_matrix(rng, 1, K - 1, start=model.h0)[0]
    else:
        harvest = np.zeros(0)
    if b1 is None:
        b1 = model.b1
    if isinstance(b1, DiscreteDist):
        b1 = float(np.asarray(b1.support)[b1.sample_index(rng, None)])
    b1 = min(float(b1), bmax)
    return Scenario(K=K, b1=b1, bmax=bmax, snr=tuple(snr),
                    harvest=tuple(harvest), h0=model.h0)


def replay_allocation(sc, alloc, tol=0.0):
    """Run an allocation through the battery dynamics slot by slot.

    Returns the battery trajectory (length K, level at the start of each
    slot).  Raises InfeasibleAllocationError if any spend exceeds the store
    by more than tol.
    """
    alloc = np.asarray(alloc, dtype=float)
    if alloc.shape != (sc.K,):
        raise ValidationError(f"allocation must have {sc.K} entries, got shape {alloc.shape}")
    levels = np.empty(sc.K)
    b = sc.b1
    for k in range(sc.K):
        levels[k] = b
        h = sc.harvest[k] if k < sc.K - 1 else 0.0
        b = battery_step(b, float(alloc[k]), h, sc.bmax, tol=tol)
    return levels


def reference_model(channel="awgn", mean_snr=1.0):
    """Benchmark setup used throughout the test bench.

    Harvest and initial store are iid uniform on {0, 0.5, 1}; the SNR is
    either constant (awgn) or exponentially distributed (rayleigh) with the
    given mean.
    """
    dist = DiscreteDist.uniform((0.0, 0.5, 1.0))
    if channel == "awgn":
        snr = AwgnProcess(mean_snr)
    elif channel == "rayleigh":
        snr = RayleighProcess(mean_snr)
    else:
        raise ValidationError(f"channel must be 'awgn' or 'rayleigh', got {channel!r}")
    return StochasticModel(snr=snr, harvest=IidProcess(dist), b1=dist, h0=0.0)
