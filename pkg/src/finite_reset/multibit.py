"""Resetting several independent bits with the same protocol."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .thermo_core import ProtocolConfig, delta_bound
from .work_stats import WorkDistribution, exact_work_distribution, w_max_eps_bound


@dataclass(frozen=True)
class MultiBitReport:
    n_bits: int
    per_bit_fail: float
    combined_fail_exact: float
    combined_fail_bound: float
    total_work_bound: float


def multi_bit_bound(n_bits: int, config: ProtocolConfig, fail_prob: float) -> MultiBitReport:
    if n_bits < 1:
        raise ValueError(f"n_bits must be >= 1, got {n_bits}")
    if not 0.0 < fail_prob < 1.0:
        raise ValueError(f"fail_prob must lie in (0, 1), got {fail_prob}")
    exact = 1.0 - (1.0 - fail_prob) ** n_bits
    return MultiBitReport(
        n_bits=n_bits,
        per_bit_fail=fail_prob,
        combined_fail_exact=exact,
        combined_fail_bound=min(1.0, n_bits * fail_prob),
        total_work_bound=n_bits * w_max_eps_bound(config, fail_prob),
    )


def average_multibit_excess(n_bits: int, config: ProtocolConfig) -> float:
    """Worst-case extra mean cost over the quasistatic reset of ``n_bits`` bits."""
    if n_bits < 1:
        raise ValueError(f"n_bits must be >= 1, got {n_bits}")
    return n_bits * delta_bound(config.num_steps, config) * config.e_max


def multi_bit_work_distribution(n_bits: int, config: ProtocolConfig) -> WorkDistribution:
    """Law of the summed work of ``n_bits`` independent resets."""
    single = exact_work_distribution(config)
    probs = np.array([1.0])
    for _ in range(n_bits):
        probs = np.convolve(probs, single.probs)
    return WorkDistribution(config.step_energy, probs)
