"""Transmit-energy allocation for a link powered by an energy harvester.

The transmitter stores harvested energy in a battery and splits it across
a fixed number of time slots to maximize total mutual information.  Two
solver families cover the two knowledge regimes:

* full side information (the whole harvest and channel path is known):
  staircase water-filling, a two-slot closed form, and a battery-grid
  dynamic program for finite storage;
* causal side information (only the current state is known): a backward
  dynamic program over a discretized state space, plus simple heuristics.

`sim` evaluates any of them by Monte Carlo; `oracle` re-derives optima by
exhaustive search for validation.  Heavy kernels run under numba when it
is installed; set EHALLOC_NO_NUMBA=1 to force the pure-numpy fallback.
"""

from ._kernels import BACKEND, NUMBA_ENABLED
from .channel import (
    db_to_linear,
    exp_e1,
    expected_mi_awgn,
    expected_mi_rayleigh,
    linear_to_db,
    mutual_info,
)
from .dp_causal import (
    PolicyTable,
    StateGrid,
    ValueGrid,
    evaluate_policy_throughput,
    load_policy,
    optimize_slot,
    rollout_policy,
    save_policy,
    solve,
)
from .errors import (
    DomainError,
    EhallocError,
    ExtrapolationError,
    InfeasibleAllocationError,
    StateCapExceeded,
    ValidationError,
)
from .fullsi import (
    GridDpResult,
    StaircaseResult,
    WaterFillResult,
    closed_form_k2,
    dp_full_finite_bmax,
    k2_allocation,
    staircase_waterfill,
    update_with_new_slot,
    waterfill,
)
from .heuristics import NAIVE, POWER_HALVING, decide
from .oracle import GridSearchConfig, brute_force_causal, brute_force_fullsi
from .si_models import (
    AwgnProcess,
    DeterministicProcess,
    DiscreteDist,
    IidProcess,
    MarkovProcess,
    RayleighProcess,
    Scenario,
    StochasticModel,
    battery_step,
    reference_model,
    replay_allocation,
    sample_scenario,
)
from .sim import SCHEMES, SimReport, run_experiment, sweep, write_csv

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "NUMBA_ENABLED",
    "__version__",
    # channel
    "db_to_linear",
    "exp_e1",
    "expected_mi_awgn",
    "expected_mi_rayleigh",
    "linear_to_db",
    "mutual_info",
    # models
    "AwgnProcess",
    "DeterministicProcess",
    "DiscreteDist",
    "IidProcess",
    "MarkovProcess",
    "RayleighProcess",
    "Scenario",
    "StochasticModel",
    "battery_step",
    "reference_model",
    "replay_allocation",
    "sample_scenario",
    # full side information
    "GridDpResult",
    "StaircaseResult",
    "WaterFillResult",
    "closed_form_k2",
    "dp_full_finite_bmax",
    "k2_allocation",
    "staircase_waterfill",
    "update_with_new_slot",
    "waterfill",
    # causal side information
    "PolicyTable",
    "StateGrid",
    "ValueGrid",
    "evaluate_policy_throughput",
    "load_policy",
    "optimize_slot",
    "rollout_policy",
    "save_policy",
    "solve",
    # heuristics
    "NAIVE",
    "POWER_HALVING",
    "decide",
    # oracle
    "GridSearchConfig",
    "brute_force_causal",
    "brute_force_fullsi",
    # simulation
    "SCHEMES",
    "SimReport",
    "run_experiment",
    "sweep",
    "write_csv",
    # errors
    "DomainError",
    "EhallocError",
    "ExtrapolationError",
    "InfeasibleAllocationError",
    "StateCapExceeded",
    "ValidationError",
]
