import itertools

import numpy as np
import pytest

from finite_reset.multibit import average_multibit_excess, multi_bit_bound, multi_bit_work_distribution
from finite_reset.thermo_core import ProtocolConfig
from finite_reset.work_stats import (
    brute_force_work_distribution,
    exact_work_distribution,
    quasistatic_work,
    stage_kernel,
    w_max_eps_bound,
)


def test_single_bit_report():
    cfg = ProtocolConfig(1.0, 0.5, 10, 0.5, 2)
    rep = multi_bit_bound(1, cfg, 0.05)
    assert rep.combined_fail_exact == pytest.approx(0.05, abs=1e-15)
    assert rep.combined_fail_bound == 0.05
    assert rep.total_work_bound == w_max_eps_bound(cfg, 0.05)


def test_ten_bits_at_one_percent():
    rep = multi_bit_bound(10, ProtocolConfig(1.0, 0.5, 10, 0.5, 2), 0.01)
    assert rep.combined_fail_exact == pytest.approx(1 - 0.99**10, abs=1e-15)
    assert rep.combined_fail_exact <= rep.combined_fail_bound == pytest.approx(0.1)


def test_union_bound_clamps():
    rep = multi_bit_bound(300, ProtocolConfig(1.0, 0.5, 10, 0.5, 2), 0.01)
    assert rep.combined_fail_bound == 1.0
    with pytest.raises(ValueError):
        multi_bit_bound(0, ProtocolConfig(1.0, 0.5, 10, 0.5, 2), 0.01)
    with pytest.raises(ValueError):
        multi_bit_bound(2, ProtocolConfig(1.0, 0.5, 10, 0.5, 2), 1.0)


def test_union_bound_grid():
    cfg = ProtocolConfig(1.0, 0.5, 10, 1.0, 1)
    for n in range(1, 1001):
        for eps in np.geomspace(1e-4, 0.5, 25):
            rep = multi_bit_bound(n, cfg, float(eps))
            assert rep.combined_fail_exact <= rep.combined_fail_bound + 1e-15


def _joint_enumeration(cfg, n_bits):
    # law of the summed work of n_bits independent chains, enumerating all joint histories
    single_histories = list(itertools.product((0, 1), repeat=cfg.num_steps + 1))
    kernels = [stage_kernel(cfg, n) for n in range(1, cfg.num_steps + 1)]
    weight = {}
    for h in single_histories:
        prob = 0.5
        for n, k in enumerate(kernels, start=1):
            prob *= k[h[n], h[n - 1]]
        weight[h] = (prob, sum(h[: cfg.num_steps]))
    mass = np.zeros(n_bits * cfg.num_steps + 1)
    for combo in itertools.product(single_histories, repeat=n_bits):
        prob = 1.0
        total = 0
        for h in combo:
            prob *= weight[h][0]
            total += weight[h][1]
        mass[total] += prob
    return mass


@pytest.mark.parametrize("n_bits,n_steps", [(2, 1), (2, 4), (2, 6), (3, 2), (3, 3)])
def test_convolution_matches_joint_enumeration(n_bits, n_steps):
    cfg = ProtocolConfig(1.0, 0.4, n_steps, 0.3, 2)
    law = multi_bit_work_distribution(n_bits, cfg)
    assert np.max(np.abs(law.probs - _joint_enumeration(cfg, n_bits))) < 1e-12


@pytest.mark.parametrize("n_bits", [2, 3])
def test_convolution_matches_brute_force_single_laws(n_bits):
    cfg = ProtocolConfig(1.0, 0.5, 8, 0.5, 1)
    single = brute_force_work_distribution(cfg).probs
    expected = single
    for _ in range(n_bits - 1):
        expected = np.convolve(expected, single)
    assert np.max(np.abs(multi_bit_work_distribution(n_bits, cfg).probs - expected)) < 1e-12


def test_excess_examples():
    slow = ProtocolConfig(1.0, 0.5, 10, 0.5, 200)
    assert average_multibit_excess(4, slow) == pytest.approx(0.0, abs=1e-12)
    cfg = ProtocolConfig(1.0, 0.5, 10, 0.5, 2)
    assert average_multibit_excess(1, cfg) * 3 == pytest.approx(average_multibit_excess(3, cfg))


@pytest.mark.parametrize("p", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("t", [0, 1, 4])
@pytest.mark.parametrize("step", [0.1, 1.0])
def test_three_bit_excess_within_bound(p, t, step):
    cfg = ProtocolConfig(1.0, step, 50, p, t)
    excess = 3 * (exact_work_distribution(cfg).mean() - quasistatic_work(cfg.e_max, cfg.beta))
    # the staged protocol overshoots the continuum integral by at most half a step per bit
    assert excess <= average_multibit_excess(3, cfg) + 3 * step / 2
