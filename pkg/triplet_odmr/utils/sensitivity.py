"""
Relative sensing-sensitivity figure

    eta ~ sqrt(t_overhead) / (C * sqrt(n_avg * c_s) * T2_chi)

Only ratios between two evaluations carry meaning; the proportionality
constant is omitted.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping

import numpy as np

logger = logging.getLogger(__name__)

T2_KINDS = ("T2", "T2*")

# exponent of each input in the figure
EXPONENTS = {
    "contrast": -1.0,
    "n_avg": -0.5,
    "spin_density": -0.5,
    "t_overhead": 0.5,
    "t2_chi": -1.0,
}


@dataclass(frozen=True)
class SensitivityInputs:
    """
    Inputs of the sensitivity figure.

    Attributes:
        contrast (float): Optical contrast C in (0, 1].
        n_avg (float): Detected photons per spin per readout.
        spin_density (float): Spin density c_s in m^-3.
        t_overhead (float): Per-measurement overhead time in seconds.
        t2_chi (float): T2 for AC sensing or T2* for DC sensing, seconds.
        t2_kind (str): Which of the two t2_chi is.
    """

    contrast: float
    n_avg: float
    spin_density: float
    t_overhead: float
    t2_chi: float
    t2_kind: str = "T2"

    def __post_init__(self):
        if not 0 < self.contrast <= 1:
            raise ValueError(f"contrast must be within (0, 1], got {self.contrast}")
        for name in ("n_avg", "spin_density", "t2_chi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.t_overhead >= 0:
            raise ValueError("t_overhead must be non-negative")
        if self.t2_kind not in T2_KINDS:
            raise ValueError(f"t2_kind must be one of {T2_KINDS}")

    @classmethod
    def from_dict(cls, payload: Mapping) -> "SensitivityInputs":
        return cls(
            contrast=float(payload["contrast"]),
            n_avg=float(payload["n_avg"]),
            spin_density=float(payload["spin_density_per_m3"]),
            t_overhead=float(payload["t_overhead_s"]),
            t2_chi=float(payload["t2_chi_s"]),
            t2_kind=payload.get("t2_kind", "T2"),
        )

    def to_dict(self) -> Dict:
        return {
            "contrast": self.contrast,
            "n_avg": self.n_avg,
            "spin_density_per_m3": self.spin_density,
            "t_overhead_s": self.t_overhead,
            "t2_chi_s": self.t2_chi,
            "t2_kind": self.t2_kind,
        }


@dataclass(frozen=True)
class SensitivityFigure:
    """A relative sensitivity value; overhead_free marks the degenerate t_overhead = 0 case."""

    value: float
    overhead_free: bool = False


@dataclass(frozen=True)
class SensitivityComparison:
    """
    Ratio b/a of two figures and the factor each input contributes to it.

    A ratio below one means b is the more sensitive configuration.
    """

    ratio: float
    contributions: Dict[str, float]
    a: SensitivityFigure
    b: SensitivityFigure

    def to_dict(self) -> Dict:
        return {
            "ratio": self.ratio,
            "contributions": dict(self.contributions),
            "a": {"value": self.a.value, "overhead_free": self.a.overhead_free},
            "b": {"value": self.b.value, "overhead_free": self.b.overhead_free},
        }


def relative_sensitivity(inp: SensitivityInputs) -> SensitivityFigure:
    """
    Evaluates sqrt(t_overhead) / (C * sqrt(n_avg * c_s) * T2_chi).

    Args:
        inp (SensitivityInputs): Validated inputs.

    Returns:
        SensitivityFigure: Smaller is better. With t_overhead = 0 the value is
        0 and overhead_free is set, since the proportionality no longer holds.
    """
    if inp.t_overhead == 0:
        logger.warning("t_overhead is zero; the sensitivity proportionality degenerates")
        return SensitivityFigure(value=0.0, overhead_free=True)
    value = np.sqrt(inp.t_overhead) / (inp.contrast * np.sqrt(inp.n_avg * inp.spin_density) * inp.t2_chi)
    return SensitivityFigure(value=float(value))


def compare_sensitivity(a: SensitivityInputs, b: SensitivityInputs) -> SensitivityComparison:
    """
    Ratio of b's figure to a's, broken down per input.

    Each contribution is (b_i / a_i) ** exponent_i; their product is the ratio.
    """
    if a.t2_kind != b.t2_kind:
        logger.warning("Comparing a %s figure with a %s figure", a.t2_kind, b.t2_kind)
    fig_a, fig_b = relative_sensitivity(a), relative_sensitivity(b)
    values_a, values_b = a.to_dict(), b.to_dict()
    keys = {
        "contrast": "contrast",
        "n_avg": "n_avg",
        "spin_density": "spin_density_per_m3",
        "t_overhead": "t_overhead_s",
        "t2_chi": "t2_chi_s",
    }
    contributions = {}
    for name, key in keys.items():
        if values_a[key] == 0:
            contributions[name] = 1.0 if values_b[key] == 0 else float("inf")
        else:
            contributions[name] = float((values_b[key] / values_a[key]) ** EXPONENTS[name])
    if fig_a.value == 0:
        ratio = 1.0 if fig_b.value == 0 else float("inf")
    else:
        ratio = fig_b.value / fig_a.value
    return SensitivityComparison(ratio=float(ratio), contributions=contributions, a=fig_a, b=fig_b)
