"""Single-shot work statistics of the finite-time reset.

A single run is a sequence of definite occupancies X_1..X_N (0 = lower,
1 = upper). X_1 is the initial coin; stage n pays X_n * step_energy when the
level is raised, after which the occupancy persists with probability
(1-p)^t or is redrawn from the Gibbs state at the new splitting. Work values
are kept as integer multiples of ``step_energy``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .thermo_core import (
    Occupation,
    ProtocolConfig,
    thermal_population,
)

DP_MAX_STEPS = 20_000
BRUTE_FORCE_MAX_STEPS = 20
SAMPLE_BLOCK = 4096
WORKERS_ENV = "FINITE_RESET_WORKERS"


@dataclass(frozen=True, eq=False)
class WorkDistribution:
    """Probability mass over the work values ``k * step_energy``, k = 0..N."""

    step_energy: float
    probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs must be a non-empty vector")
        if np.any(probs < -1e-15):
            raise ValueError("negative probability mass")
        if abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "probs", probs)

    @property
    def num_steps(self) -> int:
        return self.probs.size - 1

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.probs.size) * self.step_energy

    def mean(self) -> float:
        return float(math.fsum(np.arange(self.probs.size) * self.probs) * self.step_energy)

    def variance(self) -> float:
        k = np.arange(self.probs.size)
        mean_k = math.fsum(k * self.probs)
        return float(math.fsum((k - mean_k) ** 2 * self.probs) * self.step_energy**2)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def two_sided_tail(self, omega: float) -> float:
        """P(|W - <W>| >= omega); near-ties count as inside the tail."""
        dev = np.abs(self.support - self.mean())
        slack = 1e-12 * max(1.0, self.step_energy * self.num_steps)
        return min(1.0, math.fsum(self.probs[dev >= omega - slack]))

    def total_variation(self, other: "WorkDistribution") -> float:
        n = max(self.probs.size, other.probs.size)
        a = np.zeros(n)
        b = np.zeros(n)
        a[: self.probs.size] = self.probs
        b[: other.probs.size] = other.probs
        return 0.5 * float(np.abs(a - b).sum())

    def ks_distance(self, other: "WorkDistribution") -> float:
        n = max(self.probs.size, other.probs.size)
        a = np.zeros(n)
        b = np.zeros(n)
        a[: self.probs.size] = self.probs
        b[: other.probs.size] = other.probs
        return float(np.max(np.abs(np.cumsum(a) - np.cumsum(b))))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["work_value", "probability"])
        for k, prob in enumerate(self.probs):
            writer.writerow([f"{k * self.step_energy:.17g}", f"{prob:.17g}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "step_energy": self.step_energy,
            "work_values": [k * self.step_energy for k in range(self.probs.size)],
            "probabilities": self.probs.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_csv(cls, text: str, step_energy: float) -> "WorkDistribution":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(step_energy, np.array([float(r["probability"]) for r in rows]))


@dataclass(frozen=True)
class Trajectory:
    occupancies: tuple[int, ...]
    step_energy: float

    def __post_init__(self) -> None:
        if any(x not in (0, 1) for x in self.occupancies):
            raise ValueError("occupancies must be 0 or 1")

    @property
    def work_count(self) -> int:
        return sum(self.occupancies)

    @property
    def work(self) -> float:
        return self.work_count * self.step_energy


@dataclass(frozen=True)
class ConcentrationReport:
    omega: float
    bound_quasi: float
    bound_finite: float
    empirical_tail: float
    unbounded: bool = False


@dataclass(frozen=True, eq=False)
class SampleResult:
    distribution: WorkDistribution
    work_counts: np.ndarray = field(repr=False)
    trajectories: list[Trajectory] = field(repr=False)
    seed: int = 0


def _require_raise(config: ProtocolConfig) -> None:
    if config.direction != "raise":
        raise ValueError("work statistics are defined for the raising (reset) protocol")


def _stage_sigmas(config: ProtocolConfig) -> np.ndarray:
    # sigma[n] = Gibbs upper population at the splitting reached in stage n (index 0 unused)
    return np.array([0.0] + [thermal_population(config.stage_gap(n), config.beta).p_upper
                             for n in range(1, config.num_steps + 1)])


def exact_work_distribution(config: ProtocolConfig, initial: Occupation | None = None,
                            max_steps: int = DP_MAX_STEPS) -> WorkDistribution:
    """Exact law of W by forward dynamic programming over (occupancy, work count)."""
    _require_raise(config)
    n_steps = config.num_steps
    if n_steps > max_steps:
        raise ValueError(f"num_steps={n_steps} exceeds the DP cap of {max_steps}")
    init = Occupation.maximally_mixed() if initial is None else initial
    sigmas = _stage_sigmas(config)
    p_sw = config.p_sw
    keep = config.persistence

    # f0[k], f1[k]: P(X_n = 0/1 and k ones among X_1..X_{n-1})
    f0 = np.zeros(n_steps + 1)
    f1 = np.zeros(n_steps + 1)
    f0[0] = init.p_lower
    f1[0] = init.p_upper
    for n in range(1, n_steps + 1):
        a0 = f0[: n + 1]
        a1 = np.zeros(n + 1)
        a1[1:] = f1[:n]
        if n == n_steps:
            return WorkDistribution(config.step_energy, a0 + a1)
        up_from0 = p_sw * sigmas[n]
        up_from1 = keep + p_sw * sigmas[n]
        new1 = a0 * up_from0 + a1 * up_from1
        new0 = a0 * (1.0 - up_from0) + a1 * (1.0 - up_from1)
        f0[: n + 1] = new0
        f1[: n + 1] = new1
    raise AssertionError("unreachable")


def stage_kernel(config: ProtocolConfig, n: int) -> np.ndarray:
    """Column-stochastic 2x2 kernel P(X_{n+1} = i | X_n = j) as the t-th power of M(n)."""
    thermal = thermal_population(config.stage_gap(n), config.beta)
    m_th = np.array([[thermal.p_lower, thermal.p_lower], [thermal.p_upper, thermal.p_upper]])
    m = (1.0 - config.swap_prob) * np.eye(2) + config.swap_prob * m_th
    return np.linalg.matrix_power(m, config.therm_steps)


def brute_force_work_distribution(config: ProtocolConfig,
                                  initial: Occupation | None = None) -> WorkDistribution:
    """Enumerate all 2^(N+1) occupancy histories and sum their path probabilities."""
    _require_raise(config)
    n_steps = config.num_steps
    if n_steps > BRUTE_FORCE_MAX_STEPS:
        raise ValueError(f"brute force is limited to N <= {BRUTE_FORCE_MAX_STEPS}, got {n_steps}")
    init = Occupation.maximally_mixed() if initial is None else initial
    histories = np.array(list(product((0, 1), repeat=n_steps + 1)), dtype=np.int8)
    prob = np.where(histories[:, 0] == 1, init.p_upper, init.p_lower)
    for n in range(1, n_steps + 1):
        kernel = stage_kernel(config, n)
        prob = prob * kernel[histories[:, n], histories[:, n - 1]]
    counts = histories[:, :n_steps].sum(axis=1)
    mass = np.bincount(counts, weights=prob, minlength=n_steps + 1)
    return WorkDistribution(config.step_energy, mass)


def _default_workers() -> int:
    value = os.environ.get(WORKERS_ENV)
    return max(1, int(value)) if value else 1


def _block_stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _sample_block(config: ProtocolConfig, init_upper: float, sigmas: np.ndarray,
                  seed: int, block: int, size: int, keep_rows: int) -> tuple[np.ndarray, np.ndarray]:
    rng = _block_stream(seed, block)
    p_sw = config.p_sw
    x = rng.random(size) < init_upper
    count = np.zeros(size, dtype=np.int64)
    history = np.zeros((keep_rows, config.num_steps), dtype=np.int8)
    for n in range(1, config.num_steps + 1):
        if keep_rows:
            history[:, n - 1] = x[:keep_rows]
        count += x
        swapped = rng.random(size) < p_sw
        redraw = rng.random(size) < sigmas[n]
        x = np.where(swapped, redraw, x)
    return count, history


def sample_trajectories(config: ProtocolConfig, n_samples: int, seed: int,
                        initial: Occupation | None = None, keep: int = 10,
                        workers: int | None = None) -> SampleResult:
    """Monte Carlo single shots.

    Trajectory ``i`` draws from the stream ``SeedSequence(seed, spawn_key=(i // SAMPLE_BLOCK,))``
    at a fixed position, so results do not depend on ``workers``.
    """
    _require_raise(config)
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    init = Occupation.maximally_mixed() if initial is None else initial
    sigmas = _stage_sigmas(config)
    n_blocks = -(-n_samples // SAMPLE_BLOCK)
    keep = min(keep, n_samples, SAMPLE_BLOCK)

    def run(block: int) -> tuple[np.ndarray, np.ndarray]:
        size = min(SAMPLE_BLOCK, n_samples - block * SAMPLE_BLOCK)
        return _sample_block(config, init.p_upper, sigmas, seed, block, size,
                             keep if block == 0 else 0)

    workers = _default_workers() if workers is None else workers
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, range(n_blocks)))
    else:
        results = [run(b) for b in range(n_blocks)]

    counts = np.concatenate([r[0] for r in results])
    empirical = np.bincount(counts, minlength=config.num_steps + 1) / n_samples
    trajectories = [Trajectory(tuple(int(v) for v in row), config.step_energy)
                    for row in results[0][1]]
    return SampleResult(WorkDistribution(config.step_energy, empirical), counts, trajectories, seed)


def quasistatic_work(e_max: float, beta: float) -> float:
    """Work to raise the upper level from 0 to ``e_max`` with perfect thermalisation."""
    if e_max < 0:
        raise ValueError(f"e_max must be >= 0, got {e_max}")
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    return (math.log(2.0) - math.log1p(math.exp(-beta * e_max))) / beta


def average_work_bounds(config: ProtocolConfig) -> tuple[float, float]:
    _require_raise(config)
    lower = quasistatic_work(config.e_max, config.beta)
    upper = lower + config.persistence * (config.e_max / 2.0 - lower)
    return lower, upper


def cn_bound(config: ProtocolConfig, n: int) -> float:
    """Bounded-difference coefficient of stage ``n``; ``inf`` when P_sw = 0.

    The closed form vanishes at n = N even though X_N itself moves W by one
    step; the summed bound N * step^2 / P_sw^2 used downstream still holds.
    """
    if not 1 <= n <= config.num_steps:
        raise ValueError(f"n must lie in [1, {config.num_steps}], got {n}")
    p_sw = config.p_sw
    if p_sw == 0.0:
        return math.inf
    return config.step_energy * (1.0 - (1.0 - p_sw) ** (config.num_steps - n)) / p_sw


def mcdiarmid_bound(config: ProtocolConfig, omega: float) -> float:
    """min(1, 2 exp(-2 omega^2 P_sw^2 / (N step^2))); 1 when P_sw = 0."""
    if omega < 0:
        raise ValueError(f"omega must be >= 0, got {omega}")
    p_sw = config.p_sw
    if p_sw == 0.0:
        return 1.0
    exponent = 2.0 * omega**2 * p_sw**2 / (config.num_steps * config.step_energy**2)
    return min(1.0, 2.0 * math.exp(-exponent))


def quasistatic_mcdiarmid_bound(config: ProtocolConfig, omega: float) -> float:
    if omega < 0:
        raise ValueError(f"omega must be >= 0, got {omega}")
    exponent = 2.0 * omega**2 / (config.num_steps * config.step_energy**2)
    return min(1.0, 2.0 * math.exp(-exponent))


def concentration_report(config: ProtocolConfig, omega: float,
                         dist: WorkDistribution | None = None) -> ConcentrationReport:
    dist = exact_work_distribution(config) if dist is None else dist
    return ConcentrationReport(
        omega=omega,
        bound_quasi=quasistatic_mcdiarmid_bound(config, omega),
        bound_finite=mcdiarmid_bound(config, omega),
        empirical_tail=dist.two_sided_tail(omega),
        unbounded=config.p_sw == 0.0,
    )


def _doob_coefficients(config: ProtocolConfig) -> tuple[np.ndarray, np.ndarray]:
    # E[sum_{i>=n} X_i | X_n = x] = a[n] + b[n] * x
    n_steps = config.num_steps
    sigmas = _stage_sigmas(config)
    p_sw = config.p_sw
    keep = config.persistence
    a = np.zeros(n_steps + 1)
    b = np.zeros(n_steps + 1)
    b[n_steps] = 1.0
    for n in range(n_steps - 1, 0, -1):
        b[n] = 1.0 + keep * b[n + 1]
        a[n] = a[n + 1] + b[n + 1] * p_sw * sigmas[n]
    return a, b


def doob_sequence(config: ProtocolConfig, traj: Trajectory,
                  initial: Occupation | None = None) -> np.ndarray:
    """D(0..N): expected total work conditioned on the first n occupancies."""
    _require_raise(config)
    if len(traj.occupancies) != config.num_steps:
        raise ValueError(f"trajectory has {len(traj.occupancies)} stages, config has {config.num_steps}")
    init = Occupation.maximally_mixed() if initial is None else initial
    a, b = _doob_coefficients(config)
    x = traj.occupancies
    out = np.empty(config.num_steps + 1)
    out[0] = a[1] + b[1] * init.p_upper
    paid = 0
    for n in range(1, config.num_steps + 1):
        out[n] = paid + a[n] + b[n] * x[n - 1]
        paid += x[n - 1]
    return out * config.step_energy


def upper_transition_prob(config: ProtocolConfig, n: int, x: int) -> float:
    """P(X_{n+1} = 1 | X_n = x) for 1 <= n < N."""
    sigma = thermal_population(config.stage_gap(n), config.beta).p_upper
    return config.persistence * x + config.p_sw * sigma


def w_max_eps_bound(config: ProtocolConfig, fail_prob: float) -> float:
    """Analytic single-shot work guaranteed except with probability ``fail_prob``."""
    if not 0.0 < fail_prob < 1.0:
        raise ValueError(f"fail_prob must lie in (0, 1), got {fail_prob}")
    return _single_shot_expression(config, fail_prob)


def _single_shot_expression(config: ProtocolConfig, fail_prob: float) -> float:
    _require_raise(config)
    p_sw = config.p_sw
    if p_sw == 0.0:
        return math.inf
    quasi = quasistatic_work(config.e_max, config.beta)
    spread = math.sqrt(math.log(2.0 / fail_prob) / (2.0 * config.num_steps)) * config.e_max / p_sw
    return p_sw * quasi + 0.5 * config.persistence * config.e_max + spread


def empirical_w_max_eps(dist: WorkDistribution, fail_prob: float) -> float:
    """Smallest support point w with P(W > w) <= fail_prob."""
    if not 0.0 < fail_prob < 1.0:
        raise ValueError(f"fail_prob must lie in (0, 1), got {fail_prob}")
    # exceed[k] = P(W > k * step)
    exceed = np.concatenate([np.cumsum(dist.probs[::-1])[::-1][1:], [0.0]])
    k = int(np.argmax(exceed <= fail_prob))
    return k * dist.step_energy
