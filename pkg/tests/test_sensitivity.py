import numpy as np
import pytest

from triplet_odmr.utils.sensitivity import (
    SensitivityInputs,
    compare_sensitivity,
    relative_sensitivity,
)

BASE = dict(contrast=0.18, n_avg=0.05, spin_density=1e24, t_overhead=1e-4, t2_chi=1.71e-6)


def inputs(**overrides):
    return SensitivityInputs(**{**BASE, **overrides})


def test_contrast_gain_scales_the_ratio():
    comparison = compare_sensitivity(inputs(), inputs(contrast=0.40))
    assert comparison.ratio == pytest.approx(0.45)
    assert comparison.contributions["contrast"] == pytest.approx(0.45)
    assert comparison.contributions["t2_chi"] == 1.0


def test_contributions_multiply_to_the_ratio():
    a = inputs()
    b = inputs(contrast=0.3, n_avg=0.2, spin_density=4e23, t_overhead=2.5e-4, t2_chi=3e-6)
    comparison = compare_sensitivity(a, b)
    assert np.prod(list(comparison.contributions.values())) == pytest.approx(comparison.ratio, rel=1e-12)
    assert comparison.ratio == pytest.approx(
        relative_sensitivity(b).value / relative_sensitivity(a).value, rel=1e-12
    )


def test_longer_coherence_improves_sensitivity():
    assert compare_sensitivity(inputs(), inputs(t2_chi=2 * BASE["t2_chi"])).ratio == pytest.approx(0.5)
    assert compare_sensitivity(inputs(), inputs(t_overhead=4 * BASE["t_overhead"])).ratio == pytest.approx(2.0)


def test_zero_overhead_is_flagged():
    figure = relative_sensitivity(inputs(t_overhead=0.0))
    assert figure.value == 0.0
    assert figure.overhead_free
    comparison = compare_sensitivity(inputs(t_overhead=0.0), inputs(t_overhead=0.0))
    assert comparison.ratio == 1.0


@pytest.mark.parametrize(
    "overrides",
    [
        {"contrast": 0.0},
        {"contrast": 1.2},
        {"n_avg": -1.0},
        {"spin_density": 0.0},
        {"t_overhead": -1e-6},
        {"t2_chi": 0.0},
        {"t2_kind": "T1"},
    ],
)
def test_invalid_inputs_are_rejected(overrides):
    with pytest.raises(ValueError):
        inputs(**overrides)


def test_dict_round_trip():
    payload = inputs(t2_kind="T2*").to_dict()
    assert payload["spin_density_per_m3"] == 1e24
    assert SensitivityInputs.from_dict(payload) == inputs(t2_kind="T2*")


def test_quadrupling_the_average_population_halves_the_figure():
    base = relative_sensitivity(inputs()).value
    assert relative_sensitivity(inputs(n_avg=4 * BASE["n_avg"])).value == pytest.approx(base / 2, rel=1e-12)


def test_doubling_the_contrast_halves_the_figure():
    base = relative_sensitivity(inputs()).value
    assert relative_sensitivity(inputs(contrast=2 * BASE["contrast"])).value == pytest.approx(base / 2, rel=1e-12)


@pytest.mark.parametrize("factor", [0.25, 2.0, 9.0, 100.0])
def test_spin_density_enters_with_power_minus_one_half(factor):
    base = relative_sensitivity(inputs()).value
    scaled = relative_sensitivity(inputs(spin_density=factor * BASE["spin_density"])).value
    assert scaled == pytest.approx(base * factor ** -0.5, rel=1e-12)
    comparison = compare_sensitivity(inputs(), inputs(spin_density=factor * BASE["spin_density"]))
    assert comparison.contributions["spin_density"] == pytest.approx(factor ** -0.5, rel=1e-12)


@pytest.mark.parametrize("factor", [0.5, 3.0, 10.0])
def test_figure_is_homogeneous_in_n_avg_times_spin_density(factor):
    # only the product n_avg * c_s matters
    moved = inputs(n_avg=BASE["n_avg"] * factor, spin_density=BASE["spin_density"] / factor)
    assert relative_sensitivity(moved).value == pytest.approx(relative_sensitivity(inputs()).value, rel=1e-12)
