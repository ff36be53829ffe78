import numpy as np
import pytest

from triplet_odmr.utils.errors import InvalidInputError, KineticsError
from triplet_odmr.utils.kinetics import (
    S0,
    KineticParams,
    OpticalParams,
    Propagator,
    StateVector,
    Transition,
    apply_pi_pulse,
    cw_contrast,
    evolve,
    pl_signal,
    rate_matrix,
    readout_functional,
    steady_state,
    sublevel_decay_time,
)
from triplet_odmr.utils.presets import RECONSTRUCTED, get_preset, preset_names

from .conftest import rk4

REDUCED = [0, 2, 3, 4]


def random_params(rng, n, low=1e3, high=1e6):
    params = []
    for _ in range(n):
        k = 10 ** rng.uniform(np.log10(low), np.log10(high), 3)
        w = 10 ** rng.uniform(np.log10(low), np.log10(high), 3)
        P = rng.dirichlet(np.ones(3))
        pump = 10 ** rng.uniform(4, 6)
        params.append((KineticParams.from_arrays(k, w, P), OpticalParams(pump_rate=pump)))
    return params


def random_state(rng):
    pops = np.zeros(5)
    pops[REDUCED] = rng.dirichlet(np.ones(4))
    return StateVector(pops)


# ---- Rate matrix ----
def test_columns_sum_to_zero(dap):
    for laser_on in (True, False):
        R = rate_matrix(dap.kinetic, dap.optical, laser_on)
        assert R.shape == (4, 4)
        np.testing.assert_allclose(R.sum(axis=0), 0.0, atol=1e-9 * np.abs(R).max())
        off_diagonal = R - np.diag(np.diag(R))
        assert np.all(off_diagonal >= 0)


def test_laser_off_matrix_has_only_triplet_rates(dap):
    dark = rate_matrix(dap.kinetic, dap.optical, laser_on=False)
    no_pump = rate_matrix(dap.kinetic, OpticalParams(pump_rate=0.0), laser_on=True)
    np.testing.assert_array_equal(dark, no_pump)
    assert dark[1, 0] == dark[2, 0] == dark[3, 0] == 0.0


def test_explicit_mode_matrix(dap):
    op = OpticalParams(pump_rate=1e5, mode="explicit_s1", s1_decay_rate=1e8)
    R = rate_matrix(dap.kinetic, op, laser_on=True)
    assert R.shape == (5, 5)
    np.testing.assert_allclose(R.sum(axis=0), 0.0, atol=1e-9 * np.abs(R).max())


def test_branching_fractions_are_normalized():
    kp = KineticParams(1, 1, 1, 0, 0, 0, 2.0, 1.0, 1.0)
    np.testing.assert_allclose(kp.P, [0.5, 0.25, 0.25])
    with pytest.raises(ValueError):
        KineticParams(-1, 1, 1, 0, 0, 0, 1, 1, 1)
    with pytest.raises(ValueError):
        KineticParams(1, 1, 1, 0, 0, 0, 0, 0, 0)


# ---- Propagation ----
def test_matches_rk4_oracle_on_random_draws(rng):
    draws = random_params(rng, 100)
    generators = np.array([rate_matrix(kp, op, laser_on=True) for kp, op in draws])
    starts = [random_state(rng) for _ in draws]
    t = 5e-6
    oracle = rk4(generators, np.array([s.populations[REDUCED] for s in starts]), t)
    for R, start, expected in zip(generators, starts, oracle):
        result = evolve(start, R, t)
        np.testing.assert_allclose(result.populations[REDUCED], expected, atol=1e-7)


def test_equal_k_triplet_total_ignores_relaxation(equal_k, optical):
    R = rate_matrix(equal_k, optical, laser_on=False)
    start = StateVector.from_mapping({"Tx": 0.5, "Ty": 0.1, "Tz": 0.2, "S0": 0.2})
    propagator = Propagator(R)
    for t in (1e-7, 3e-6, 2e-5, 1e-4):
        total = propagator.evolve(start, t).triplet.sum()
        assert total == pytest.approx(0.8 * np.exp(-5e4 * t), abs=1e-12)
    oracle = rk4(R, start.populations[REDUCED], 3e-6)
    assert oracle[1:].sum() == pytest.approx(0.8 * np.exp(-5e4 * 3e-6), abs=1e-8)


def test_single_sublevel_decays_exponentially(dap):
    kp = KineticParams.from_arrays(dap.kinetic.k, (0, 0, 0), dap.kinetic.P)
    R = rate_matrix(kp, dap.optical, laser_on=False)
    start = StateVector.from_mapping({"Tx": 1.0})
    for t in (1e-7, 1e-6, 1e-5):
        assert evolve(start, R, t).populations[2] == pytest.approx(np.exp(-24.9e4 * t), abs=1e-12)
    one_over_e = 1.0 / kp.k_x
    assert evolve(start, R, one_over_e).populations[2] == pytest.approx(np.exp(-1.0), abs=1e-6)
    assert one_over_e == pytest.approx(4.016e-6, rel=1e-3)


def test_conservation_with_fast_rates(rng):
    for kp, op in random_params(rng, 20, low=1e3, high=1e7):
        propagator = Propagator(rate_matrix(kp, op, laser_on=True))
        start = random_state(rng)
        for t in (1e-9, 1e-6, 1e-3, 1.0):
            pops = propagator.evolve(start, t).populations
            assert abs(pops.sum() - 1.0) <= 1e-9
            assert pops.min() >= 0.0


def test_semigroup(dap):
    R = rate_matrix(dap.kinetic, dap.optical, laser_on=True)
    start = StateVector.ground()
    two_steps = evolve(evolve(start, R, 1.3e-6), R, 2.9e-6)
    np.testing.assert_allclose(two_steps.populations, evolve(start, R, 4.2e-6).populations, atol=1e-9)


def test_leaky_generator_is_rejected(dap):
    R = rate_matrix(dap.kinetic, dap.optical, laser_on=False)
    R[1, 1] -= 500.0  # T_x column of the reduced generator
    start = StateVector.from_mapping({"Tx": 1.0})
    with pytest.raises(KineticsError, match="conserve"):
        evolve(start, R, 1e-9)
    with pytest.raises(KineticsError):
        Propagator(R)


def test_long_sequences_stay_normalized(dap):
    on = Propagator(rate_matrix(dap.kinetic, dap.optical, laser_on=True))
    off = Propagator(rate_matrix(dap.kinetic, dap.optical, laser_on=False))
    state = StateVector.ground()
    for _ in range(200):
        state = off.evolve(on.evolve(state, 1e-6), 3.7e-5)
    assert state.populations.sum() == pytest.approx(1.0, abs=1e-12)


def test_zero_time_is_identity_and_negative_time_is_rejected(dap):
    R = rate_matrix(dap.kinetic, dap.optical, laser_on=True)
    start = StateVector.from_mapping({"S0": 0.5, "Tz": 0.5})
    assert evolve(start, R, 0.0) is start
    with pytest.raises(ValueError):
        evolve(start, R, -1e-9)


def test_reduced_mode_rejects_singlet_excited_population(dap):
    R = rate_matrix(dap.kinetic, dap.optical, laser_on=True)
    with pytest.raises(ValueError):
        evolve(StateVector.from_mapping({"S0": 0.5, "S1": 0.5}), R, 1e-6)


def test_explicit_mode_approaches_reduced_for_fast_singlet_decay(dap):
    reduced = evolve(StateVector.ground(), rate_matrix(dap.kinetic, dap.optical, True), 1e-6)
    explicit_op = OpticalParams(
        pump_rate=dap.optical.pump_rate, isc_yield=dap.optical.isc_yield,
        s1_decay_rate=1e10, mode="explicit_s1",
    )
    explicit = evolve(StateVector.ground(), rate_matrix(dap.kinetic, explicit_op, True), 1e-6)
    np.testing.assert_allclose(explicit.triplet, reduced.triplet, atol=1e-3)
    assert explicit.n_S1 < 1e-3


def test_pump_fraction_sets_ground_depletion():
    op = OpticalParams.for_pump_fraction(0.3, 1e-6)
    assert op.pump_rate == pytest.approx(-np.log(0.7) / (0.65 * 1e-6))
    kp = KineticParams(0, 0, 0, 0, 0, 0, 1, 1, 1)
    state = evolve(StateVector.ground(), rate_matrix(kp, op, True), 1e-6)
    assert state.n_S0 == pytest.approx(0.7, abs=1e-9)


# ---- Steady state ----
def test_dark_steady_state_is_ground(dap):
    state = steady_state(rate_matrix(dap.kinetic, dap.optical, laser_on=False))
    np.testing.assert_allclose(state.populations, [1, 0, 0, 0, 0], atol=1e-12)


def test_steady_state_is_scale_invariant(dap):
    R = rate_matrix(dap.kinetic, dap.optical, laser_on=True)
    np.testing.assert_allclose(
        steady_state(7.5 * R).populations, steady_state(R).populations, atol=1e-12
    )


def test_strong_pump_and_relaxation_equalize_sublevels(dap):
    kp = KineticParams.from_arrays(dap.kinetic.k, (1e8, 1e8, 1e8), dap.kinetic.P)
    state = steady_state(rate_matrix(kp, OpticalParams(pump_rate=1e9), laser_on=True))
    triplet = state.triplet
    np.testing.assert_allclose(triplet, triplet.mean(), rtol=0.01)


def test_disconnected_kinetics_have_no_unique_steady_state(optical):
    kp = KineticParams(0, 0, 0, 0, 0, 0, 1, 1, 1)
    with pytest.raises(KineticsError):
        steady_state(rate_matrix(kp, optical, laser_on=False))


# ---- Microwave pulses ----
def test_pi_pulse_swaps_populations():
    state = StateVector.from_mapping({"Tx": 0.60, "Ty": 0.21, "Tz": 0.19})
    swapped = apply_pi_pulse(state, Transition.XY)
    np.testing.assert_allclose(swapped.triplet, [0.21, 0.60, 0.19])
    np.testing.assert_allclose(apply_pi_pulse(swapped, "y-x").populations, state.populations)
    half = apply_pi_pulse(state, "x-z", efficiency=0.5)
    assert half.populations[2] == pytest.approx(half.populations[4])


def test_pi_pulse_on_empty_sublevels_is_identity():
    state = StateVector.ground()
    assert np.array_equal(apply_pi_pulse(state, Transition.YZ).populations, state.populations)
    with pytest.raises(ValueError):
        apply_pi_pulse(state, Transition.YZ, efficiency=1.5)


# ---- Readout ----
def test_ground_state_readout_counts_pump_rate(dap):
    window = 1e-9
    signal = pl_signal(StateVector.ground(), dap.kinetic, dap.optical, window)
    assert signal == pytest.approx(dap.optical.pump_rate * window, rel=1e-3)
    dark = pl_signal(StateVector.from_mapping({"Tz": 1.0}), dap.kinetic, dap.optical, window)
    assert dark < 1e-4 * dap.optical.pump_rate * window


def test_readout_matches_rk4_quadrature(dap, rng):
    window = 1e-6
    op = dap.optical
    R = rate_matrix(dap.kinetic, op, laser_on=True)
    augmented = np.zeros((5, 5))
    augmented[:4, :4] = R
    augmented[4, 0] = op.pump_rate
    for _ in range(5):
        state = random_state(rng)
        x0 = np.append(state.populations[REDUCED], 0.0)
        integral = rk4(augmented, x0, window)[4]
        assert pl_signal(state, dap.kinetic, op, window) == pytest.approx(integral, rel=1e-7)


def test_readout_increases_with_ground_population(dap, rng):
    weights = readout_functional(dap.kinetic, dap.optical, 1e-6)
    assert np.all(weights[S0] > weights[2:])
    for _ in range(20):
        state = random_state(rng)
        pops = state.populations.copy()
        donor = 2 + int(np.argmax(pops[2:]))
        moved = 0.5 * pops[donor]
        pops[donor] -= moved
        pops[S0] += moved
        if moved > 0:
            assert pl_signal(StateVector(pops), dap.kinetic, dap.optical, 1e-6) > pl_signal(
                state, dap.kinetic, dap.optical, 1e-6
            )


# ---- Derived quantities ----
def test_dap_sublevel_decay_order(dap):
    isolated = [sublevel_decay_time(dap.kinetic, s, relaxation=False) for s in "xyz"]
    assert isolated[0] < isolated[1] < isolated[2]
    np.testing.assert_allclose(isolated, 1.0 / dap.kinetic.k, rtol=1e-6)
    coupled = [sublevel_decay_time(dap.kinetic, s) for s in "xyz"]
    assert coupled[0] < min(coupled[1:])
    # w_xz drains T_z through the fast T_x sublevel
    assert coupled[2] < isolated[2]


def test_cw_contrast_vanishes_for_equal_k(equal_k, optical):
    for transition in Transition:
        assert abs(cw_contrast(equal_k, optical, transition, 1e6)) < 1e-9


def test_cw_contrast_nonzero_for_dap(dap):
    assert abs(cw_contrast(dap.kinetic, dap.optical, Transition.XZ, 1e6)) > 1e-4


# ---- Presets ----
def test_preset_ratios_and_provenance(dap, pc):
    assert dap.kinetic.k_x == pytest.approx(24.9e4)
    assert dap.kinetic.k_x / dap.kinetic.k_z == pytest.approx(12.0)
    assert pc.kinetic.k_x / pc.kinetic.k_z == pytest.approx(5.0)
    assert dap.kinetic.k_x / pc.kinetic.k_x == pytest.approx(10.0)
    assert (dap.kinetic.P_x, dap.kinetic.P_y, dap.kinetic.P_z) == pytest.approx((0.60, 0.21, 0.19))
    assert (pc.kinetic.P_x, pc.kinetic.P_y, pc.kinetic.P_z) == pytest.approx((0.76, 0.16, 0.08))
    for preset in (dap, pc):
        assert preset.provenance == RECONSTRUCTED
        assert preset.to_dict()["kinetics"]["isc_yield"] == pytest.approx(0.65)


def test_unknown_preset():
    assert preset_names() == ["DAP-fig4c", "Pc-fig4c"]
    with pytest.raises(InvalidInputError):
        get_preset("TCNB")
