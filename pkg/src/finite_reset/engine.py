"""Two-bath qubit engine: reset against a cold bath, extraction against a hot one.

Work is counted as consumed by the system, so the engine produces output
when ``net_work < 0``. Duration counts thermalisation steps only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Literal

from .thermo_core import (
    Occupation,
    ProtocolConfig,
    effective_swap_prob,
    evolve_stage,
    thermal_population,
)

LIMIT_CYCLE_TOL = 1e-12
LIMIT_CYCLE_MAX_ITER = 10**6

Half = Literal["reset", "extract"]
Mode = Literal["first-cycle", "limit-cycle"]


class LimitCycleError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"limit cycle not reached after {iterations} cycles (residual {residual:.3e})")
        self.residual = residual
        self.iterations = iterations


class NoEngineRegimeError(ValueError):
    pass


@dataclass(frozen=True)
class EngineConfig:
    t_cold: float
    t_hot: float
    e_max: float
    num_steps: int
    swap_prob: float
    therm_steps: int

    def __post_init__(self) -> None:
        for name in ("t_cold", "t_hot", "e_max", "swap_prob"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0 < self.t_cold <= self.t_hot:
            raise ValueError(f"need 0 < t_cold <= t_hot, got {self.t_cold}, {self.t_hot}")
        if self.e_max <= 0:
            raise ValueError(f"e_max must be > 0, got {self.e_max}")
        if int(self.num_steps) != self.num_steps or self.num_steps < 1:
            raise ValueError(f"num_steps must be an integer >= 1, got {self.num_steps}")
        if not 0.0 <= self.swap_prob <= 1.0:
            raise ValueError(f"swap_prob must lie in [0, 1], got {self.swap_prob}")
        if int(self.therm_steps) != self.therm_steps or self.therm_steps < 0:
            raise ValueError(f"therm_steps must be an integer >= 0, got {self.therm_steps}")

    @property
    def step_energy(self) -> float:
        return self.e_max / self.num_steps

    @property
    def p_sw(self) -> float:
        return effective_swap_prob(self.swap_prob, self.therm_steps)

    @property
    def persistence(self) -> float:
        return (1.0 - self.swap_prob) ** self.therm_steps

    def half_protocol(self, half: Half) -> ProtocolConfig:
        temperature = self.t_cold if half == "reset" else self.t_hot
        return ProtocolConfig(
            beta=1.0 / temperature,
            step_energy=self.step_energy,
            num_steps=self.num_steps,
            swap_prob=self.swap_prob,
            therm_steps=self.therm_steps,
            direction="raise" if half == "reset" else "lower",
        )


@dataclass(frozen=True)
class CycleStage:
    """One level shift followed by thermalisation.

    ``shifted`` is the occupation right after the shift (it equals the
    carried-over state), ``occupation`` the one after thermalising.
    """

    stage: int
    half: Half
    gap: float
    shifted: Occupation
    occupation: Occupation
    work: float
    t_eff_shifted: float
    t_eff: float
    entropy_bits: float


@dataclass(frozen=True)
class CycleReport:
    stages: list[CycleStage]
    net_work: float
    duration: int
    power: float
    converged: bool
    start: Occupation
    cycles: int = 1

    CSV_COLUMNS = ("stage", "half", "event", "gap", "p_upper", "work", "T_eff", "entropy_bits")

    def to_csv(self) -> str:
        """Two rows per stage: the level shift and the thermalisation that follows."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        for i, st in enumerate(self.stages, start=1):
            writer.writerow([i, st.half, "shift", _fmt(st.gap), _fmt(st.shifted.p_upper),
                             _fmt(st.work), _fmt(st.t_eff_shifted), _fmt(state_entropy(st.shifted))])
            writer.writerow([i, st.half, "thermalize", _fmt(st.gap), _fmt(st.occupation.p_upper),
                             _fmt(0.0), _fmt(st.t_eff), _fmt(st.entropy_bits)])
        return buf.getvalue()


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def effective_temperature(state: Occupation, gap: float) -> float:
    """Temperature whose Gibbs state at ``gap`` reproduces ``state``.

    Equal populations give ``inf``, inverted ones a negative value and an
    empty upper level ``0.0``.
    """
    if not gap > 0:
        raise ValueError(f"gap must be > 0, got {gap}")
    if state.p_upper <= 0.0:
        return 0.0
    if state.p_lower <= 0.0:
        return -0.0
    ratio = math.log(state.p_lower / state.p_upper)
    if ratio == 0.0:
        return math.inf
    return gap / ratio


def state_entropy(state: Occupation) -> float:
    """Shannon entropy in bits."""
    return -math.fsum(p * math.log2(p) for p in (state.p_lower, state.p_upper) if p > 0.0)


def _t_eff_or_nan(state: Occupation, gap: float) -> float:
    return effective_temperature(state, gap) if gap > 0 else math.nan


def _run_half(config: EngineConfig, half: Half, state: Occupation,
              record: bool) -> tuple[Occupation, float, list[CycleStage]]:
    proto = config.half_protocol(half)
    sign = 1.0 if half == "reset" else -1.0
    stages = []
    works = []
    for n in range(1, proto.num_steps + 1):
        work = sign * state.p_upper * proto.step_energy
        gap = proto.stage_gap(n)
        new = evolve_stage(state, gap, proto)
        works.append(work)
        if record:
            stages.append(CycleStage(n, half, gap, state, new, work, _t_eff_or_nan(state, gap),
                                     _t_eff_or_nan(new, gap), state_entropy(new)))
        state = new
    return state, math.fsum(works), stages


def _cycle(config: EngineConfig, start: Occupation, record: bool = False):
    state, w_reset, st_reset = _run_half(config, "reset", start, record)
    state, w_extract, st_extract = _run_half(config, "extract", state, record)
    return state, w_reset + w_extract, st_reset + st_extract


def _limit_cycle_start(config: EngineConfig, start: Occupation) -> tuple[Occupation, int]:
    # The cycle map is affine in p_upper: evaluate it twice, then iterate the scalar map.
    f0 = _cycle(config, Occupation(1.0, 0.0))[0].p_upper
    f1 = _cycle(config, Occupation(0.0, 1.0))[0].p_upper
    slope = f1 - f0
    x = start.p_upper
    residual = math.inf
    for i in range(1, LIMIT_CYCLE_MAX_ITER + 1):
        nxt = min(1.0, max(0.0, f0 + slope * x))
        residual = abs(nxt - x)
        x = nxt
        if residual < LIMIT_CYCLE_TOL:
            return Occupation.from_upper(x), i
    raise LimitCycleError(residual, LIMIT_CYCLE_MAX_ITER)


def run_cycle(config: EngineConfig, mode: Mode = "limit-cycle",
              start: Occupation | None = None) -> CycleReport:
    """Simulate one engine cycle.

    ``first-cycle`` starts from ``start`` (default the maximally mixed state);
    ``limit-cycle`` iterates full cycles until the start-of-cycle occupation
    moves by less than 1e-12 and reports that steady cycle.
    """
    start = Occupation.maximally_mixed() if start is None else start
    if mode == "first-cycle":
        cycles, converged = 1, False
    elif mode == "limit-cycle":
        start, cycles = _limit_cycle_start(config, start)
        converged = True
    else:
        raise ValueError(f"unknown mode {mode!r}")
    _, net, stages = _cycle(config, start, record=True)
    duration = 2 * config.num_steps * config.therm_steps
    power = net / duration if duration else math.nan
    return CycleReport(stages, net, duration, power, converged, start, cycles)


def partition_max(e_max: float, temperature: float) -> float:
    return 1.0 + math.exp(-e_max / temperature)


def quasistatic_net_work(config: EngineConfig) -> float:
    """Quasistatic reset work at T_C minus quasistatic extraction at T_H."""
    z_c = partition_max(config.e_max, config.t_cold)
    z_h = partition_max(config.e_max, config.t_hot)
    return (-(config.t_hot - config.t_cold) * math.log(2.0)
            - config.t_cold * math.log(z_c) + config.t_hot * math.log(z_h))


def net_work_bound(config: EngineConfig) -> float:
    p_sw = config.p_sw
    return p_sw * quasistatic_net_work(config) + (1.0 - p_sw) * config.e_max


def power_bound(config: EngineConfig) -> float:
    if config.therm_steps < 1:
        raise ValueError("power is undefined for therm_steps = 0 (zero cycle duration)")
    return net_work_bound(config) / (2.0 * (config.e_max / config.step_energy) * config.therm_steps)


def min_time_positive_output(config: EngineConfig) -> float:
    """Thermalisation time per stage beyond which the net-work bound turns negative."""
    w_net = quasistatic_net_work(config)
    if w_net >= 0:
        raise NoEngineRegimeError(f"quasistatic net work {w_net:.6g} >= 0: no engine regime")
    if config.swap_prob == 0.0:
        return math.inf
    if config.swap_prob == 1.0:
        return 0.0
    return -math.log(1.0 - config.e_max / w_net) / math.log(1.0 - config.swap_prob)


@dataclass(frozen=True)
class EfficiencyBounds:
    eta_lower: float
    eta_upper: float
    eta_quasi: float
    eta_carnot: float


def efficiency_bounds(config: EngineConfig) -> EfficiencyBounds:
    one_bit = config.t_hot * math.log(2.0)
    eta_quasi = -quasistatic_net_work(config) / one_bit
    eta_lower = eta_quasi - config.persistence * config.e_max / one_bit
    return EfficiencyBounds(eta_lower, eta_quasi, eta_quasi, 1.0 - config.t_cold / config.t_hot)


def carnot_gap_term(config: EngineConfig) -> float:
    """(ln Z_H - (T_C/T_H) ln Z_C) / ln 2, the finite-E_max shortfall from Carnot."""
    z_c = partition_max(config.e_max, config.t_cold)
    z_h = partition_max(config.e_max, config.t_hot)
    return (math.log(z_h) - config.t_cold / config.t_hot * math.log(z_c)) / math.log(2.0)


def realized_efficiency(report: CycleReport, config: EngineConfig) -> float:
    return -report.net_work / (config.t_hot * math.log(2.0))
