"""Finite-time bit reset with partial-swap thermalisation."""

from .thermo_core import (
    DeltaBoundReport,
    Occupation,
    ProtocolConfig,
    delta_bound,
    delta_trace,
    effective_swap_prob,
    evolve_protocol,
    evolve_stage,
    partial_swap_step,
    reset_failure_bound,
    thermal_population,
    total_work,
)
from .work_stats import (
    ConcentrationReport,
    Trajectory,
    WorkDistribution,
    average_work_bounds,
    brute_force_work_distribution,
    cn_bound,
    doob_sequence,
    empirical_w_max_eps,
    exact_work_distribution,
    mcdiarmid_bound,
    quasistatic_work,
    sample_trajectories,
    w_max_eps_bound,
)
from .engine import (
    CycleReport,
    EngineConfig,
    efficiency_bounds,
    effective_temperature,
    min_time_positive_output,
    net_work_bound,
    power_bound,
    run_cycle,
    state_entropy,
)
from .multibit import MultiBitReport, average_multibit_excess, multi_bit_bound

__version__ = "0.1.0"
