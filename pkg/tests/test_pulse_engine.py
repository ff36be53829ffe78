import itertools

import numpy as np
import pytest

from triplet_odmr.utils.kinetics import (
    KineticParams,
    StateVector,
    Transition,
    apply_pi_pulse,
    evolve,
    pl_signal,
    rate_matrix,
)
from triplet_odmr.utils.pulse_engine import (
    INIT_PULSES,
    PLAN_SIZE,
    Delay,
    Laser,
    MeasurementSpec,
    Microwave,
    PulseTiming,
    Readout,
    Sequence,
    SequenceRunner,
    all_measurements,
    build_init_sequence,
    build_sequence_a,
    build_sequence_b,
    contrast,
    control_sequence,
    default_delay_grid,
    generate_plan,
    kinetic_transition_weights,
    optimize_readout_delay,
    simulate_curve,
    simulate_plan,
    simulate_sequence,
)

GRID = (0.0, 3e-6, 2e-5)


def manual_signal(spec, delay, kp, op, timing):
    """Composes the sequence by hand from the kinetics primitives."""
    on, off = rate_matrix(kp, op, True), rate_matrix(kp, op, False)
    state = evolve(StateVector.ground(), on, timing.laser_duration)
    for transition in INIT_PULSES[spec.init_id]:
        state = apply_pi_pulse(state, transition)
    state = evolve(state, off, delay)
    if spec.sequence_kind == "A":
        reference = StateVector.ground()
    else:
        reference = evolve(state, off, spec.readout_delay)
        state = evolve(apply_pi_pulse(state, spec.b_pulse_transition), off, spec.readout_delay)
    window = timing.readout_window
    return pl_signal(state, kp, op, window) / pl_signal(reference, kp, op, window)


# ---- Initialization ----
def test_init_sequences_realize_every_permutation():
    populations = (0.60, 0.21, 0.19)
    start = StateVector.from_mapping(dict(zip(("Tx", "Ty", "Tz"), populations)))
    seen = set()
    for init_id in range(1, 7):
        state = start
        for pulse in build_init_sequence(init_id):
            state = apply_pi_pulse(state, pulse.transition)
        seen.add(tuple(np.round(state.triplet, 12)))
    assert seen == set(itertools.permutations(populations))


def test_init_sequence_examples():
    start = StateVector.from_mapping({"Tx": 0.60, "Ty": 0.21, "Tz": 0.19})
    assert build_init_sequence(1) == []
    state = apply_pi_pulse(start, build_init_sequence(2)[0].transition)
    np.testing.assert_allclose(state.triplet, [0.21, 0.60, 0.19])
    with pytest.raises(ValueError):
        build_init_sequence(7)


# ---- Plan ----
def test_plan_has_22_distinct_measurements():
    plan = generate_plan(GRID)
    assert len(plan) == PLAN_SIZE == 22
    assert len({(s.init_id, s.sequence_kind, s.b_pulse_transition) for s in plan}) == 22
    assert sum(s.sequence_kind == "A" for s in plan) == 6
    assert all(len(s.transitions_used()) < 3 for s in plan)
    missing = {s.key for s in all_measurements(GRID)} - {s.key for s in plan}
    assert missing == {"B-init5-x-z", "B-init6-x-z"}


def test_plan_rejects_empty_grid():
    with pytest.raises(ValueError):
        generate_plan([])


def test_measurement_spec_validation():
    with pytest.raises(ValueError):
        MeasurementSpec(1, "B")
    with pytest.raises(ValueError):
        MeasurementSpec(1, "A", Transition.XY)
    with pytest.raises(ValueError):
        MeasurementSpec(0, "A")
    spec = MeasurementSpec(3, "B", "z-x", GRID)
    assert spec.key == "B-init3-x-z"
    assert MeasurementSpec.from_dict(spec.to_dict(), GRID) == spec


# ---- Sequence structure ----
def test_sequence_validation():
    with pytest.raises(ValueError):
        Sequence((Laser(1e-6), Delay(1e-6)))
    with pytest.raises(ValueError):
        Sequence((Laser(1e-6), Readout(1e-6), Delay(0.0), Readout(1e-6)))
    with pytest.raises(ValueError):
        Sequence((Microwave(Transition.XY), Laser(1e-6), Readout(1e-6)))
    with pytest.raises(ValueError):
        Delay(-1.0)


def test_control_sequences():
    seq_a = build_sequence_a(3, 1e-6)
    assert not any(isinstance(e, (Laser, Microwave)) for e in control_sequence(seq_a).elements)
    seq_b = build_sequence_b(2, 1e-6, Transition.YZ)
    control = control_sequence(seq_b)
    microwaves = [e for e in control.elements if isinstance(e, Microwave)]
    assert [m.transition for m in microwaves] == [Transition.XY]


def test_dark_sequence_is_its_own_reference(dap):
    assert simulate_sequence(Sequence((Delay(1e-6), Readout(1e-6))), dap.kinetic, dap.optical) == 1.0


# ---- Signals ----
def test_every_plan_curve_matches_hand_composition(dap):
    timing = PulseTiming()
    for spec in generate_plan(GRID, readout_delay=2e-6):
        curve = simulate_curve(spec, dap.kinetic, dap.optical, timing)
        expected = [manual_signal(spec, d, dap.kinetic, dap.optical, timing) for d in GRID]
        np.testing.assert_allclose(curve.signal, expected, rtol=1e-10)


def test_sequence_a_recovers_at_long_delay(dap):
    for init_id in range(1, 7):
        value = simulate_sequence(build_sequence_a(init_id, 1e-2), dap.kinetic, dap.optical)
        assert value == pytest.approx(1.0, abs=1e-6)


def test_sequence_a_at_zero_delay_reads_ground_population(dap):
    timing = PulseTiming(readout_window=1e-10)
    runner = SequenceRunner(dap.kinetic, dap.optical)
    state = runner.state_before_readout(build_sequence_a(1, 0.0, timing))
    value = runner.signal(build_sequence_a(1, 0.0, timing))
    assert value == pytest.approx(state.n_S0, rel=1e-5)
    assert 0 < value < 1


def test_sequence_a_signals_lie_in_unit_interval(dap):
    grid = default_delay_grid(dap.kinetic, points_per_decade=5)
    for curve in simulate_plan(generate_plan(grid)[:6], dap.kinetic, dap.optical):
        assert np.all(curve.signal > 0)
        assert np.all(curve.signal <= 1 + 1e-12)


def test_population_in_fast_sublevel_recovers_first(dap):
    values = {
        init_id: simulate_sequence(build_sequence_a(init_id, 1e-5), dap.kinetic, dap.optical)
        for init_id in range(1, 7)
    }
    # inits 1 and 4 leave the large P_x share in the fast T_x sublevel
    slow = max(values[i] for i in (2, 3, 5, 6))
    assert min(values[1], values[4]) > slow


def test_sequence_b_without_readout_delay_equals_sequence_a(dap):
    timing = PulseTiming(readout_window=1e-10)
    runner = SequenceRunner(dap.kinetic, dap.optical)
    for delay in (0.0, 2e-6, 1e-5):
        raw_a = runner.raw_signal(build_sequence_a(1, delay, timing))
        raw_b = runner.raw_signal(build_sequence_b(1, delay, Transition.XZ, 0.0, timing))
        assert raw_b == pytest.approx(raw_a, rel=1e-5)


def test_final_pulse_on_equal_populations_is_a_no_op(optical):
    kp = KineticParams(3e4, 3e4, 1e4, 2e4, 1e4, 1e4, 0.4, 0.4, 0.2)
    value = simulate_sequence(build_sequence_b(1, 0.0, Transition.XY, 2e-6), kp, optical)
    assert value == pytest.approx(1.0, abs=1e-12)


def test_dap_x_z_final_pulse_darkens(dap):
    value = simulate_sequence(build_sequence_b(1, 0.0, Transition.XZ, 2e-6), dap.kinetic, dap.optical)
    assert value < 1.0


# ---- Contrast ----
def test_contrast_of_identical_sequences_is_zero(dap):
    seq = build_sequence_b(1, 0.0, Transition.XZ)
    assert contrast(seq, seq, dap.kinetic, dap.optical) == 0.0


def test_contrast_changes_sign_with_preswapped_populations(dap):
    pulsed = build_sequence_b(1, 0.0, Transition.XZ, 2e-6)
    reference = control_sequence(pulsed)
    forward = contrast(pulsed, reference, dap.kinetic, dap.optical)
    # an extra x-z swap before the final pulse restores the populations the reference reads
    preswapped = build_sequence_b(3, 0.0, Transition.XZ, 2e-6)
    backward = contrast(preswapped, control_sequence(preswapped), dap.kinetic, dap.optical)
    assert forward < 0 < backward


def test_contrast_rejects_different_programs(dap):
    with pytest.raises(ValueError):
        contrast(build_sequence_a(1, 1e-6), build_sequence_a(1, 2e-6), dap.kinetic, dap.optical)


def test_equal_k_removes_every_contrast(equal_k, optical):
    runner = SequenceRunner(equal_k, optical)
    for spec in generate_plan(GRID):
        if spec.sequence_kind == "B":
            np.testing.assert_allclose(runner.curve(spec).signal, 1.0, atol=1e-9)


def test_dap_contrast_exceeds_pc(dap, pc):
    _, dap_value = optimize_readout_delay(dap.kinetic, dap.optical, Transition.XZ)
    _, pc_value = optimize_readout_delay(pc.kinetic, pc.optical, Transition.XZ)
    assert abs(pc_value) > 0
    assert abs(dap_value) > abs(pc_value)


def test_optimized_delay_beats_the_grid(dap):
    grid = np.geomspace(1e-7, 1e-4, 12)
    delay, value = optimize_readout_delay(dap.kinetic, dap.optical, Transition.XZ, grid=grid)
    runner = SequenceRunner(dap.kinetic, dap.optical)
    on_grid = [runner.signal(build_sequence_b(1, 0.0, Transition.XZ, d)) - 1.0 for d in grid]
    assert abs(value) >= max(abs(v) for v in on_grid)
    assert grid[0] <= delay <= grid[-1]


def test_kinetic_transition_weights(dap):
    weights = kinetic_transition_weights(dap.kinetic, dap.optical)
    assert set(weights) == {"x-y", "x-z", "y-z"}
    assert weights["x-z"] < 0


def test_dap_contrast_sign_pattern(dap):
    weights = kinetic_transition_weights(dap.kinetic, dap.optical)
    assert weights["x-y"] < 0
    assert weights["x-z"] < 0
    assert weights["y-z"] > 0
    assert weights["y-z"] < min(abs(weights["x-y"]), abs(weights["x-z"]))


def test_dap_preset_keeps_the_rate_ordering(dap):
    kp = dap.kinetic
    assert kp.k_x > kp.k_y > kp.k_z
    assert kp.k_x / kp.k_z == pytest.approx(12.0)


# ---- Delay grid ----
def test_default_delay_grid_spans_ten_lifetimes(dap):
    grid = default_delay_grid(dap.kinetic, points_per_decade=30, start=1e-7)
    assert grid[0] == pytest.approx(1e-7)
    assert grid[-1] == pytest.approx(10.0 / dap.kinetic.k.min())
    decades = np.log10(grid[-1] / grid[0])
    assert len(grid) == int(np.ceil(decades * 30)) + 1
    assert np.all(np.diff(grid) > 0)


def test_simulated_curve_noise_is_seeded(dap):
    curve = simulate_curve(generate_plan(GRID)[0], dap.kinetic, dap.optical)
    first = curve.with_noise(0.01, np.random.default_rng(5))
    second = curve.with_noise(0.01, np.random.default_rng(5))
    np.testing.assert_array_equal(first.signal, second.signal)
    assert not np.array_equal(first.signal, curve.signal)
