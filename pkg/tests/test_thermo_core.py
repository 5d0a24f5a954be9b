import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from finite_reset.thermo_core import (
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

probs = st.floats(0.0, 1.0, allow_nan=False)
gaps = st.floats(0.0, 50.0, allow_nan=False)
betas = st.floats(0.05, 20.0, allow_nan=False)


def test_thermal_population_examples():
    assert thermal_population(0.0, 3.0) == Occupation(0.5, 0.5)
    occ = thermal_population(math.log(2), 1.0)
    assert occ.p_lower == pytest.approx(2 / 3, abs=1e-15)
    assert occ.p_upper == pytest.approx(1 / 3, abs=1e-15)
    far = thermal_population(1e6, 1.0)
    assert abs(far.p_lower - 1) < 1e-12 and abs(far.p_upper) < 1e-12


@pytest.mark.parametrize("gap,beta", [(math.nan, 1.0), (1.0, math.inf), (-1.0, 1.0), (1.0, 0.0)])
def test_thermal_population_rejects_bad_input(gap, beta):
    with pytest.raises(ValueError):
        thermal_population(gap, beta)


def test_occupation_validation():
    with pytest.raises(ValueError):
        Occupation(0.6, 0.6)
    with pytest.raises(ValueError):
        Occupation(1.5, -0.5)


def test_config_validation():
    with pytest.raises(ValueError, match="beta"):
        ProtocolConfig(0.0, 1.0, 1, 0.5, 1)
    with pytest.raises(ValueError, match="num_steps"):
        ProtocolConfig(1.0, 1.0, 0, 0.5, 1)
    with pytest.raises(ValueError, match="swap_prob"):
        ProtocolConfig(1.0, 1.0, 1, 1.5, 1)
    with pytest.raises(ValueError, match="therm_steps"):
        ProtocolConfig(1.0, 1.0, 1, 0.5, -1)
    assert ProtocolConfig(1.0, 0.25, 8, 0.5, 1).e_max == 2.0


def test_effective_swap_prob():
    assert effective_swap_prob(1.0, 1) == 1.0
    assert effective_swap_prob(0.5, 2) == 0.75
    assert all(effective_swap_prob(0.0, t) == 0.0 for t in range(10))
    assert effective_swap_prob(1.0, 0) == 0.0


def test_partial_swap_examples():
    state = Occupation(0.9, 0.1)
    assert partial_swap_step(state, 1.3, 0.7, 1.0) == thermal_population(1.3, 0.7)
    assert partial_swap_step(state, 1.3, 0.7, 0.0) == state
    out = partial_swap_step(Occupation(1.0, 0.0), 0.0, 1.0, 0.5)
    assert (out.p_lower, out.p_upper) == (0.75, 0.25)


def test_evolve_stage_matches_explicit_matrices():
    # Oracle: two products of M = 0.7 I + 0.3 M_th at gap 1, beta 1, computed with numpy.
    cfg = ProtocolConfig(1.0, 1.0, 1, 0.3, 2)
    out = evolve_stage(Occupation(0.5, 0.5), 1.0, cfg)
    assert out.p_lower == pytest.approx(0.6178398751013026, abs=1e-15)
    assert out.p_upper == pytest.approx(0.3821601248986975, abs=1e-15)


def test_evolve_stage_examples():
    state = Occupation(0.8, 0.2)
    assert evolve_stage(state, 2.0, ProtocolConfig(1.0, 1.0, 1, 0.5, 0)) == state
    three = evolve_stage(state, 2.0, ProtocolConfig(1.0, 1.0, 1, 0.5, 3))
    once = partial_swap_step(state, 2.0, 1.0, 0.875)
    assert three.p_upper == pytest.approx(once.p_upper, abs=1e-15)


@pytest.mark.parametrize("p", [round(0.1 * i, 1) for i in range(11)])
@pytest.mark.parametrize("t", range(11))
def test_channel_composition(p, t):
    cfg = ProtocolConfig(0.8, 1.0, 1, p, t)
    state = Occupation(0.35, 0.65)
    stepped = evolve_stage(state, 1.7, cfg)
    single = partial_swap_step(state, 1.7, 0.8, effective_swap_prob(p, t))
    assert stepped.p_upper == pytest.approx(single.p_upper, abs=1e-12)
    assert abs(stepped.p_lower + stepped.p_upper - 1) <= 1e-12


@given(probs, gaps, betas, probs)
def test_contraction_and_fixed_point(p_upper, gap, beta, p):
    state = Occupation.from_upper(p_upper)
    thermal = thermal_population(gap, beta)
    after = partial_swap_step(state, gap, beta, p)
    assert abs(after.p_upper - thermal.p_upper) == pytest.approx(
        (1 - p) * abs(state.p_upper - thermal.p_upper), abs=1e-12)
    fixed = partial_swap_step(thermal, gap, beta, p)
    assert fixed.p_upper == pytest.approx(thermal.p_upper, abs=1e-12)
    assert abs(after.p_lower + after.p_upper - 1) <= 1e-12


def test_single_stage_protocol_pays_half():
    trace = evolve_protocol(ProtocolConfig(1.0, 0.7, 1, 0.4, 2))
    assert total_work(trace) == pytest.approx(0.35, abs=1e-15)


@pytest.mark.parametrize("p", [0.0, 0.3, 1.0])
def test_no_thermalisation_costs_half_emax(p):
    cfg = ProtocolConfig(1.0, 0.1, 40, p, 0)
    assert total_work(evolve_protocol(cfg)) == pytest.approx(cfg.e_max / 2, abs=1e-12)


def test_near_quasistatic_protocol_hits_landauer():
    # Oracle: W_quasi(25) = ln2 - ln(1+e^-25) by quadrature of the Gibbs tail, plus the left
    # Riemann overshoot which telescopes to at most step/2.
    cfg = ProtocolConfig(1.0, 0.005, 5000, 1.0, 1)
    w = total_work(evolve_protocol(cfg))
    assert math.log(2) <= w <= math.log(2) + 0.0025


@given(st.floats(0.05, 1.0), st.integers(0, 6), st.floats(0.05, 2.0), st.integers(1, 40))
@settings(max_examples=60, deadline=None)
def test_raising_keeps_lower_population_monotone(p, t, step, n):
    trace = evolve_protocol(ProtocolConfig(1.0, step, n, p, t))
    lowers = [0.5] + [r.occupation.p_lower for r in trace]
    assert all(b >= a - 1e-12 for a, b in zip(lowers, lowers[1:]))


def test_lowering_protocol_descends_and_returns_work():
    cfg = ProtocolConfig(1.0, 0.5, 6, 0.5, 1, direction="lower")
    trace = evolve_protocol(cfg)
    assert [r.gap for r in trace] == [2.5, 2.0, 1.5, 1.0, 0.5, 0.0]
    assert all(r.work <= 0 for r in trace)


def test_delta_bound_examples():
    assert delta_bound(3, ProtocolConfig(1.0, 1.0, 5, 1.0, 1)) == 0.0
    far = ProtocolConfig(1.0, 100.0, 1, 0.5, 0)
    assert delta_bound(1, far) == pytest.approx(0.5, abs=1e-15)
    cfg = ProtocolConfig(1.0, math.log(2), 1, 0.5, 1)
    assert delta_bound(1, cfg) == pytest.approx(1 / 12, abs=1e-15)
    with pytest.raises(ValueError, match="raising"):
        delta_bound(1, ProtocolConfig(1.0, 1.0, 2, 0.5, 1, direction="lower"))


@pytest.mark.parametrize("p", [0.0, 0.2, 0.6, 1.0])
@pytest.mark.parametrize("t", [0, 1, 4])
@pytest.mark.parametrize("beta_step", [0.1, 1.0])
def test_measured_delta_never_exceeds_bound(p, t, beta_step):
    for rep in delta_trace(ProtocolConfig(1.0, beta_step, 60, p, t)):
        assert 0 <= rep.delta_actual <= rep.delta_bound + 1e-12


def test_reset_failure_examples():
    cfg = ProtocolConfig(1.0, 1.0, 5, 0.3, 4)
    sigma = thermal_population(5.0, 1.0).p_upper
    assert reset_failure_bound(ProtocolConfig(1.0, 1.0, 5, 1.0, 3)) == pytest.approx(sigma, abs=1e-15)
    assert reset_failure_bound(ProtocolConfig(1.0, 1.0, 5, 0.3, 0)) == 0.5
    assert evolve_protocol(cfg)[-1].occupation.p_upper <= reset_failure_bound(cfg)


@pytest.mark.parametrize("p", [0.0, 0.4, 1.0])
def test_zero_thermalisation_leaves_bit_mixed(p):
    cfg = ProtocolConfig(2.0, 0.3, 25, p, 0)
    assert evolve_protocol(cfg)[-1].occupation.p_upper == 0.5
    assert reset_failure_bound(cfg) == 0.5


def test_work_is_sum_of_stage_increments():
    cfg = ProtocolConfig(1.3, 0.2, 30, 0.4, 2)
    trace = evolve_protocol(cfg)
    uppers = [0.5] + [r.occupation.p_upper for r in trace[:-1]]
    assert total_work(trace) == pytest.approx(sum(u * 0.2 for u in uppers), abs=1e-13)
    assert np.allclose([r.gap for r in trace], 0.2 * np.arange(1, 31))
