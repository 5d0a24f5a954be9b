"""Two-level protocol model with partial-swap thermalisation.

Units: k_B = hbar = 1, so temperatures are energies and ``beta`` is an
inverse energy. A protocol shifts the upper level of a qubit in ``num_steps``
equal increments of ``step_energy``; after each shift the system meets the
bath ``therm_steps`` times, each meeting replacing it by the Gibbs state with
probability ``swap_prob``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

PROB_TOL = 1e-12

Direction = Literal["raise", "lower"]


def _check_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Occupation:
    """Populations of the lower and upper level."""

    p_lower: float
    p_upper: float

    def __post_init__(self) -> None:
        _check_finite(p_lower=self.p_lower, p_upper=self.p_upper)
        if not (-PROB_TOL <= self.p_lower <= 1 + PROB_TOL and -PROB_TOL <= self.p_upper <= 1 + PROB_TOL):
            raise ValueError(f"populations out of [0, 1]: {self}")
        if abs(self.p_lower + self.p_upper - 1.0) > PROB_TOL:
            raise ValueError(f"populations do not sum to 1: {self}")

    @classmethod
    def from_upper(cls, p_upper: float) -> "Occupation":
        return cls(1.0 - p_upper, p_upper)

    @classmethod
    def maximally_mixed(cls) -> "Occupation":
        return cls(0.5, 0.5)


@dataclass(frozen=True)
class ProtocolConfig:
    beta: float
    step_energy: float
    num_steps: int
    swap_prob: float
    therm_steps: int
    direction: Direction = "raise"

    def __post_init__(self) -> None:
        _check_finite(beta=self.beta, step_energy=self.step_energy, swap_prob=self.swap_prob)
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.step_energy <= 0:
            raise ValueError(f"step_energy must be > 0, got {self.step_energy}")
        if int(self.num_steps) != self.num_steps or self.num_steps < 1:
            raise ValueError(f"num_steps must be an integer >= 1, got {self.num_steps}")
        if not 0.0 <= self.swap_prob <= 1.0:
            raise ValueError(f"swap_prob must lie in [0, 1], got {self.swap_prob}")
        if int(self.therm_steps) != self.therm_steps or self.therm_steps < 0:
            raise ValueError(f"therm_steps must be an integer >= 0, got {self.therm_steps}")
        if self.direction not in ("raise", "lower"):
            raise ValueError(f"direction must be 'raise' or 'lower', got {self.direction!r}")
        if not math.isfinite(self.e_max):
            raise ValueError("num_steps * step_energy overflows")

    @property
    def e_max(self) -> float:
        return self.num_steps * self.step_energy

    @property
    def persistence(self) -> float:
        """Probability that a whole stage passes without a swap, (1-p)^t."""
        return (1.0 - self.swap_prob) ** self.therm_steps

    @property
    def p_sw(self) -> float:
        return effective_swap_prob(self.swap_prob, self.therm_steps)

    def stage_gap(self, n: int) -> float:
        """Level splitting in force during stage ``n`` (after its shift)."""
        if self.direction == "raise":
            return n * self.step_energy
        return (self.num_steps - n) * self.step_energy


@dataclass(frozen=True)
class StageRecord:
    stage: int
    gap: float
    occupation: Occupation
    work: float


@dataclass(frozen=True)
class DeltaBoundReport:
    stage: int
    delta_actual: float
    delta_bound: float


def thermal_population(gap: float, beta: float) -> Occupation:
    """Gibbs populations for a level splitting ``gap`` at inverse temperature ``beta``."""
    _check_finite(gap=gap, beta=beta)
    if gap < 0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    boltzmann = math.exp(-beta * gap)
    p_upper = boltzmann / (1.0 + boltzmann)
    return Occupation(1.0 / (1.0 + boltzmann), p_upper)


def effective_swap_prob(p: float, t: int) -> float:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return 1.0 - (1.0 - p) ** t


def partial_swap_step(state: Occupation, gap: float, beta: float, p: float) -> Occupation:
    """One application of M = (1-p) I + p M_th at fixed splitting."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    thermal = thermal_population(gap, beta)
    p_upper = (1.0 - p) * state.p_upper + p * thermal.p_upper
    p_lower = (1.0 - p) * state.p_lower + p * thermal.p_lower
    return Occupation(p_lower, p_upper)


def evolve_stage(state: Occupation, stage_gap: float, config: ProtocolConfig) -> Occupation:
    """Thermalise for ``config.therm_steps`` unit steps at a fixed splitting."""
    for _ in range(config.therm_steps):
        state = partial_swap_step(state, stage_gap, config.beta, config.swap_prob)
    return state


def default_initial(config: ProtocolConfig) -> Occupation:
    if config.direction == "raise":
        return Occupation.maximally_mixed()
    return thermal_population(config.e_max, config.beta)


def evolve_protocol(config: ProtocolConfig, initial: Occupation | None = None) -> list[StageRecord]:
    """Ensemble evolution through all stages.

    Each stage shifts the level first (paying ``+-p_upper * step_energy`` at the
    carried-over occupation) and then thermalises at the new splitting. The
    record stores the post-thermalisation occupation.
    """
    state = default_initial(config) if initial is None else initial
    sign = 1.0 if config.direction == "raise" else -1.0
    trace = []
    for n in range(1, config.num_steps + 1):
        work = sign * state.p_upper * config.step_energy
        gap = config.stage_gap(n)
        state = evolve_stage(state, gap, config)
        trace.append(StageRecord(n, gap, state, work))
    return trace


def total_work(trace: list[StageRecord]) -> float:
    return math.fsum(rec.work for rec in trace)


def delta_bound(stage: int, config: ProtocolConfig) -> float:
    """Upper bound on the variational distance from the Gibbs state after ``stage``."""
    if config.direction != "raise":
        raise ValueError("the variational-distance bound holds only for monotone raising")
    if not 1 <= stage <= config.num_steps:
        raise ValueError(f"stage must lie in [1, {config.num_steps}], got {stage}")
    thermal = thermal_population(stage * config.step_energy, config.beta)
    return (thermal.p_lower - 0.5) * config.persistence


def delta_trace(config: ProtocolConfig, initial: Occupation | None = None) -> list[DeltaBoundReport]:
    reports = []
    for rec in evolve_protocol(config, initial):
        thermal = thermal_population(rec.gap, config.beta)
        actual = abs(rec.occupation.p_upper - thermal.p_upper)
        reports.append(DeltaBoundReport(rec.stage, actual, delta_bound(rec.stage, config)))
    return reports


def reset_failure_bound(config: ProtocolConfig) -> float:
    """Bound on the final upper-level population after a reset from the mixed state."""
    if config.direction != "raise":
        raise ValueError("reset failure is defined for the raising protocol")
    sigma = thermal_population(config.e_max, config.beta).p_upper
    return sigma + config.persistence * (0.5 - sigma)
