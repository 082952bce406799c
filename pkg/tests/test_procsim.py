import math
from dataclasses import replace

import numpy as np
import pytest

from hotforge.procsim import (DEFAULT_PARAMS, ForgingStrategy, MaterialParams,
                              OracleState, ProcessSimulator, StabilityError,
                              StrategyBoundsError, apply_stroke,
                              avrami_fraction, cell_volumes, grain_growth_size,
                              idle_phase, lattice_volume, microstructure_step,
                              recrystallization_t50, run_process,
                              stability_limit, strain_pattern, thermal_step)

GAS_R = 8.314
INSULATED = replace(DEFAULT_PARAMS, h_air=0.0, emissivity=0.0)


def nominal_strategy(**kw):
    base = dict(t_oven=1200.0, t_transport=0.0, wait=(10.0, 10.0, 10.0),
                upsetting=(0.1, 0.1, 0.1))
    base.update(kw)
    return ForgingStrategy(**base)


# -- strategy validation -----------------------------------------------------

def test_strategy_bounds_listed_exhaustively():
    s = ForgingStrategy(1350.0, 40.0, (0.5, 10.0, 70.0), (0.01, 0.1, 0.2))
    msgs = s.violations()
    assert len(msgs) == 6
    with pytest.raises(StrategyBoundsError) as exc:
        s.validate()
    assert "t_oven" in str(exc.value) and "wait3" in str(exc.value)


def test_strategy_vector_round_trip():
    s = nominal_strategy(wait=(12.0, 34.0, 56.0))
    assert ForgingStrategy.from_vector(s.as_vector()) == s


# -- thermal -----------------------------------------------------------------

def test_thermal_equilibrium_with_lossless_boundaries():
    state = OracleState.initial(1200.0, INSULATED)
    thermal_step(state, stability_limit(state, INSULATED), "air", INSULATED)
    assert np.allclose(state.temperature, 1200.0, atol=1e-9)


def test_thermal_air_cools_boundary_only():
    state = OracleState.initial(1200.0, DEFAULT_PARAMS)
    thermal_step(state, 1e-3, "air", DEFAULT_PARAMS)
    t = state.temperature
    assert np.all(t[20, :] < 1200.0)           # top edge loses heat
    assert np.all(t[:, 10] < 1200.0)           # outer edge loses heat
    assert np.allclose(t[:19, :9], 1200.0)     # interior untouched after one step


def test_thermal_die_contact_cools_top_toward_die():
    state = OracleState.initial(1200.0, INSULATED)
    thermal_step(state, 1e-3, "die", INSULATED)
    assert np.all(state.temperature[20, :] < 1200.0)
    assert np.all(state.temperature[20, :] > DEFAULT_PARAMS.t_die)


def test_thermal_step_rejects_unstable_dt():
    state = OracleState.initial(1200.0)
    limit = stability_limit(state, DEFAULT_PARAMS)
    with pytest.raises(StabilityError):
        thermal_step(state, 1.5 * limit, "air", DEFAULT_PARAMS)


def test_insulated_enthalpy_conserved_over_1000_steps():
    state = OracleState.initial(900.0, INSULATED)
    state.temperature[10, 5] = 1400.0
    weights = cell_volumes(state.dr, state.dz, state.temperature.shape)
    e0 = float(np.sum(weights * state.temperature))
    dt = stability_limit(state, INSULATED) * 0.9
    for _ in range(1000):
        thermal_step(state, dt, "air", INSULATED)
    e1 = float(np.sum(weights * state.temperature))
    assert abs(e1 - e0) / abs(e0) < 1e-3
    # the hot spot has actually diffused
    assert state.temperature[10, 5] < 1100.0


def test_discrete_maximum_principle_randomized():
    rng = np.random.default_rng(42)
    for _ in range(100):
        state = OracleState.initial(1000.0, INSULATED)
        state.temperature = rng.uniform(950.0, 1450.0, size=(21, 11))
        lo, hi = state.temperature.min(), state.temperature.max()
        dt = rng.uniform(0.05, 1.0) * stability_limit(state, INSULATED)
        thermal_step(state, dt, "air", INSULATED)
        assert state.temperature.min() >= lo - 1e-9
        assert state.temperature.max() <= hi + 1e-9


# -- strokes -----------------------------------------------------------------

def test_stroke_kinematics_closed_form():
    state = OracleState.initial(1200.0)
    apply_stroke(state, 1, 0.1)
    assert state.half_height == pytest.approx(5.0 * math.exp(-0.3), rel=1e-12)
    assert state.radius == pytest.approx(2.5 * math.exp(0.15), rel=1e-12)
    assert np.all(state.ux >= 0.0) and np.all(state.uy <= 0.0)


def test_stroke_volume_conserved_each_stroke():
    state = OracleState.initial(1200.0)
    v0 = lattice_volume(state)
    for k in (1, 2, 3):
        apply_stroke(state, k, 0.1)
        v = lattice_volume(state)
        assert abs(v - v0) / v0 < 5e-3


def test_zero_barrel_gives_uniform_strain():
    params = replace(INSULATED, barrel_coeff=0.0, h_die=0.0)
    state = OracleState.initial(1200.0, params)
    apply_stroke(state, 1, 0.1, params)
    assert np.allclose(state.eqplast, 0.3, atol=1e-12)


def test_adiabatic_heating_magnitude():
    params = replace(INSULATED, barrel_coeff=0.0, h_die=0.0)
    state = OracleState.initial(1200.0, params)
    apply_stroke(state, 1, 0.1, params)
    expected = 0.9 * 150e6 * 0.3 / (7850.0 * 650.0)
    assert expected == pytest.approx(7.94, abs=0.1)
    assert np.allclose(state.temperature, 1200.0 + expected, atol=1e-9)


def test_strain_pattern_volume_mean_is_unity():
    pat = strain_pattern(OracleState.initial(1200.0).grid, DEFAULT_PARAMS.barrel_coeff)
    # volume weights cancel the radial factor of the pattern exactly
    w = cell_volumes(1.0, 1.0, pat.shape)
    assert float(np.sum(w * pat) / np.sum(w)) == pytest.approx(1.0, abs=5e-3)


def test_stroke_rejects_bad_arguments():
    state = OracleState.initial(1200.0)
    with pytest.raises(ValueError):
        apply_stroke(state, 4, 0.1)
    with pytest.raises(ValueError):
        apply_stroke(state, 1, 0.3)


# -- kinetics ----------------------------------------------------------------

def test_t50_matches_direct_evaluation():
    direct = 5.8e-15 * 4900.0 * 0.3 ** -2 * 3.0 ** -0.5 \
        * math.exp(300000.0 / (GAS_R * 1473.15))
    got = recrystallization_t50(DEFAULT_PARAMS, 70.0, 0.3, 3.0, 1200.0)
    assert abs(got - direct) / direct < 1e-9
    assert direct == pytest.approx(8.0, abs=0.5)


def test_growth_matches_direct_evaluation():
    direct = (25.0 ** 7 + 8e22 * 30.0 * math.exp(-400000.0 / (GAS_R * 1473.15))) ** (1.0 / 7.0)
    got = grain_growth_size(DEFAULT_PARAMS, 25.0, 30.0, 1200.0)
    assert abs(got - direct) / direct < 1e-9
    assert direct == pytest.approx(30.0, abs=0.5)


def test_avrami_midpoint_is_half():
    assert avrami_fraction(1.0, DEFAULT_PARAMS.avrami_exponent) == pytest.approx(0.5, abs=1e-9)


def test_microstructure_step_matches_formula():
    params = INSULATED
    state = OracleState.initial(1200.0, params)
    apply_stroke(state, 1, 0.1, replace(params, h_die=0.0, barrel_coeff=0.0))
    t50 = recrystallization_t50(params, 70.0, 0.3, 3.0, float(state.temperature[0, 0]))
    dt = 0.5 * t50
    microstructure_step(state, dt, params)
    expected_rx = avrami_fraction(dt / t50, params.avrami_exponent)
    assert np.allclose(state.rx, expected_rx, rtol=1e-9)
    d_rx = state.d_rx[0, 0]
    expected_d = expected_rx ** (4.0 / 3.0) * d_rx + (1 - expected_rx) ** 2 * 70.0
    assert state.grain[0, 0] == pytest.approx(expected_d, rel=1e-9)


def test_mixture_endpoints():
    params = replace(INSULATED, h_die=0.0, barrel_coeff=0.0)
    state = OracleState.initial(1200.0, params)
    apply_stroke(state, 1, 0.1, params)
    assert np.allclose(state.grain, state.d_prev)     # rx = 0 keeps d_prev
    microstructure_step(state, 1e9, params)           # drive rx to 1
    assert np.allclose(state.rx, 1.0)
    assert np.allclose(state.grain, grain_growth_size(
        params, state.grain[0, 0], 0.0, 1200.0))      # now in growth regime
    # the growth entry point was the fully recrystallized size
    assert state.grain[0, 0] <= state.d_rx[0, 0] * 1.01


def test_rx_monotone_within_wait():
    state = OracleState.initial(1200.0)
    apply_stroke(state, 1, 0.1)
    prev = state.rx.copy()
    for _ in range(40):
        idle_phase(state, 0.5)
        assert np.all(state.rx >= prev - 1e-15)
        assert np.all(state.rx <= 1.0) and np.all(state.rx >= 0.0)
        prev = state.rx.copy()


def test_growth_strictly_increases_and_freezes_when_cold():
    params = INSULATED
    state = OracleState.initial(1200.0, params)
    apply_stroke(state, 1, 0.1, replace(params, h_die=0.0))
    microstructure_step(state, 1e9, params)   # complete recrystallization
    g0 = state.grain.copy()
    microstructure_step(state, 5.0, params)
    assert np.all(state.grain > g0)
    state.temperature[:] = 850.0              # below the freeze threshold
    g1 = state.grain.copy()
    microstructure_step(state, 50.0, params)
    assert np.array_equal(state.grain, g1)


def test_retained_strain_carries_between_strokes():
    params = replace(INSULATED, h_die=0.0, barrel_coeff=0.0)
    state = OracleState.initial(1200.0, params)
    apply_stroke(state, 1, 0.1, params)
    # no recrystallization happened, the full 0.3 carries into stroke 2
    apply_stroke(state, 2, 0.1, params)
    assert np.allclose(state.eps_drv, 0.6, atol=1e-12)


# -- full runs ---------------------------------------------------------------

def test_run_process_initial_snapshot():
    snaps = run_process(nominal_strategy())
    assert len(snaps) == 8
    s0 = snaps[0]
    assert np.allclose(s0.grain, 70.0)
    assert np.allclose(s0.rx, 0.0)
    assert np.allclose(s0.eqplast, 0.0)
    assert np.allclose(s0.ux, 0.0) and np.allclose(s0.uy, 0.0)


def test_run_process_temperature_bounded_by_adiabatic_budget():
    strategy = nominal_strategy(t_oven=1250.0)
    bound = 1250.0 + 0.9 * 150e6 * (1.0 + DEFAULT_PARAMS.barrel_coeff) / (7850.0 * 650.0)
    for snap in run_process(strategy):
        assert snap.temperature.max() <= bound + 1e-6


def test_run_process_monotonicity_probe():
    fast = run_process(nominal_strategy(wait=(5.0, 5.0, 5.0)))
    slow = run_process(nominal_strategy(wait=(30.0, 30.0, 30.0)))
    core = (slice(5, 16), slice(0, 8))
    assert slow[6].grain[core].mean() < fast[6].grain[core].mean()


def test_run_process_deterministic():
    strategy = nominal_strategy(t_oven=1234.5, t_transport=3.0, wait=(7.0, 41.0, 19.0))
    a = run_process(strategy)
    b = run_process(strategy)
    for x, y in zip(a, b):
        for name in ("temperature", "ux", "uy", "eqplast", "rx", "grain"):
            assert np.array_equal(getattr(x, name), getattr(y, name))


def test_run_process_validates_strategy():
    with pytest.raises(StrategyBoundsError):
        run_process(nominal_strategy(t_oven=1050.0))


def test_process_simulator_stagewise_matches_full_run():
    strategy = nominal_strategy()
    sim = ProcessSimulator(strategy)
    sim.advance(3)
    sim.advance(2)
    sim.advance(3)
    full = run_process(strategy)
    for a, b in zip(sim.snapshots, full):
        assert np.array_equal(a.grain, b.grain)
        assert np.array_equal(a.temperature, b.temperature)


def test_snapshot_states_validate():
    for snap in run_process(nominal_strategy()):
        snap.validate()
