"""
Project configuration schema.

A project config is one JSON document with the sections spin_system, spectrum,
kinetics, plan, fit, eseem and paths. Physical quantities never have defaults;
numerical and algorithmic options do, and are echoed into output metadata.
"""

import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import ujson
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .global_fit import START_SPREAD
from .kinetics import KineticParams, OpticalParams
from .presets import get_preset
from .pulse_engine import (
    DEFAULT_GRID_START,
    DEFAULT_LASER_DURATION,
    DEFAULT_POINTS_PER_DECADE,
    DEFAULT_READOUT_DELAY,
    DEFAULT_READOUT_WINDOW,
    PulseTiming,
    default_delay_grid,
)
from .spin_hamiltonian import DEFAULT_PRUNE_THRESHOLD, SpectrumConfig, SpinSystem

logger = logging.getLogger(__name__)

Triple = Tuple[float, float, float]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class NucleusSection(StrictModel):
    A_MHz: Triple
    Q_MHz: Triple


class SpinSystemSection(StrictModel):
    D_MHz: float
    E_MHz: float
    nuclei: List[NucleusSection]

    def to_spin_system(self) -> SpinSystem:
        try:
            return SpinSystem.from_dict(self.model_dump())
        except ValueError as exc:
            raise ConfigError(f"spin_system: {exc}") from exc


class SpectrumSection(StrictModel):
    line_shape: Literal["gaussian", "lorentzian"] = "gaussian"
    fwhm_MHz: float = Field(gt=0)
    grid_MHz: Tuple[float, float, int]
    transition_weights: Optional[Dict[str, float]] = None
    weights_from_kinetics: bool = False
    prune_threshold: float = Field(DEFAULT_PRUNE_THRESHOLD, ge=0)

    def to_spectrum_config(self, weights: Optional[Dict[str, float]] = None) -> SpectrumConfig:
        try:
            return SpectrumConfig(
                line_shape=self.line_shape,
                fwhm=self.fwhm_MHz,
                grid=self.grid_MHz,
                transition_weights=weights if weights is not None else self.transition_weights,
            )
        except ValueError as exc:
            raise ConfigError(f"spectrum: {exc}") from exc


class RatesSection(StrictModel):
    """Either a preset name or the three explicit triplet arrays."""

    preset: Optional[str] = None
    k_per_s: Optional[Triple] = None
    w_per_s: Optional[Triple] = None
    P: Optional[Triple] = None

    @model_validator(mode="after")
    def _preset_or_explicit(self):
        explicit = [self.k_per_s, self.w_per_s, self.P]
        if self.preset is not None and any(v is not None for v in explicit):
            raise ValueError("give either a preset or explicit k_per_s/w_per_s/P, not both")
        if self.preset is None and any(v is None for v in explicit):
            raise ValueError("k_per_s, w_per_s and P are all required without a preset")
        if self.preset is not None:
            get_preset(self.preset)
        return self

    def to_kinetic(self) -> KineticParams:
        if self.preset is not None:
            return get_preset(self.preset).kinetic
        try:
            return KineticParams.from_arrays(self.k_per_s, self.w_per_s, self.P)
        except ValueError as exc:
            raise ConfigError(f"kinetics: {exc}") from exc


class KineticsSection(RatesSection):
    pump_per_s: Optional[float] = None
    isc_yield: Optional[float] = None
    mode: Literal["reduced", "explicit_s1"] = "reduced"
    s1_decay_per_s: Optional[float] = None

    @model_validator(mode="after")
    def _optical_complete(self):
        if self.preset is None and (self.pump_per_s is None or self.isc_yield is None):
            raise ValueError("pump_per_s and isc_yield are required without a preset")
        if self.mode == "explicit_s1" and self.s1_decay_per_s is None:
            raise ValueError("s1_decay_per_s is required in explicit_s1 mode")
        return self

    def to_optical(self) -> OpticalParams:
        base = get_preset(self.preset).optical if self.preset is not None else None
        payload = {
            "pump_per_s": self.pump_per_s if self.pump_per_s is not None else base.pump_rate,
            "isc_yield": self.isc_yield if self.isc_yield is not None else base.isc_yield,
            "mode": self.mode,
        }
        if self.s1_decay_per_s is not None:
            payload["s1_decay_per_s"] = self.s1_decay_per_s
        try:
            return OpticalParams.from_dict(payload)
        except ValueError as exc:
            raise ConfigError(f"kinetics: {exc}") from exc

    def preset_names(self) -> List[str]:
        return [self.preset] if self.preset else []


class PlanSection(StrictModel):
    laser_duration_s: float = Field(DEFAULT_LASER_DURATION, ge=0)
    readout_window_s: float = Field(DEFAULT_READOUT_WINDOW, gt=0)
    readout_delay_s: float = Field(DEFAULT_READOUT_DELAY, ge=0)
    delay_grid_s: Optional[List[float]] = None
    points_per_decade: int = Field(DEFAULT_POINTS_PER_DECADE, gt=0)
    grid_start_s: float = Field(DEFAULT_GRID_START, gt=0)
    noise_sigma: float = Field(0.0, ge=0)

    def timing(self) -> PulseTiming:
        return PulseTiming(laser_duration=self.laser_duration_s, readout_window=self.readout_window_s)

    def delay_grid(self, kinetic: KineticParams) -> np.ndarray:
        if self.delay_grid_s is not None:
            grid = np.asarray(self.delay_grid_s, dtype=float)
            if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
                raise ConfigError("plan.delay_grid_s must be non-empty, non-negative and increasing")
            return grid
        try:
            return default_delay_grid(kinetic, self.points_per_decade, self.grid_start_s)
        except ValueError as exc:
            raise ConfigError(f"plan: {exc}") from exc


class FitSection(StrictModel):
    initial: Optional[RatesSection] = None
    multi_start: int = Field(8, ge=1)
    perturbation: float = Field(START_SPREAD, ge=0)
    max_nfev: int = Field(500, gt=0)
    ftol: float = Field(1e-10, gt=0)
    xtol: float = Field(1e-12, gt=0)
    rel_step: float = Field(1e-6, gt=0, le=0.1)
    fit_pump_scale: bool = True
    per_curve_amplitude: bool = False
    curves_subset: Literal["all", "A"] = "all"


class EseemSection(StrictModel):
    time_axis: Optional[Literal["tau", "total_time"]] = None
    window: Literal["none", "hann"] = "hann"
    zero_pad_factor: Literal[1, 2, 4, 8] = 4
    detrend: bool = True
    stretched: bool = False
    tolerance_MHz: float = Field(0.3, gt=0)
    predicted_MHz: Optional[Dict[str, float]] = None


class PathsSection(StrictModel):
    out_dir: str = "out"
    curves_dir: Optional[str] = None
    trace: Optional[str] = None
    sensitivity_a: Optional[str] = None
    sensitivity_b: Optional[str] = None


class ProjectConfig(StrictModel):
    spin_system: Optional[SpinSystemSection] = None
    spectrum: Optional[SpectrumSection] = None
    kinetics: Optional[KineticsSection] = None
    plan: PlanSection = PlanSection()
    fit: FitSection = FitSection()
    eseem: EseemSection = EseemSection()
    paths: PathsSection = PathsSection()

    def require(self, section: str):
        value = getattr(self, section)
        if value is None:
            raise ConfigError(f"Config section {section!r} is required for this command")
        return value


class LoadedConfig:
    """
    A validated config together with the digest of its source bytes.

    Attributes:
        config (ProjectConfig): Validated model.
        sha256 (str): Hex digest of the raw file, for provenance.
        path (Path): Where it was read from.
        dropped_keys (list): Unknown keys removed in lenient mode.
    """

    def __init__(self, config: ProjectConfig, sha256: str, path: Path, dropped_keys: List[str]):
        self.config = config
        self.sha256 = sha256
        self.path = path
        self.dropped_keys = dropped_keys


def _drop_key(payload: Any, loc: Tuple) -> bool:
    node = payload
    for part in loc[:-1]:
        try:
            node = node[part]
        except (KeyError, IndexError, TypeError):
            return False
    if isinstance(node, dict) and loc and loc[-1] in node:
        del node[loc[-1]]
        return True
    return False


def validate_config(payload: Dict, strict: bool = True) -> Tuple[ProjectConfig, List[str]]:
    """
    Validates a parsed config document.

    In lenient mode unknown keys are removed with a warning and the document
    is validated again; every other problem is still an error.

    Returns:
        tuple: (ProjectConfig, dotted names of dropped keys).

    Raises:
        ConfigError: On any schema violation.
    """
    if not isinstance(payload, dict):
        raise ConfigError("Config must be a JSON object")
    dropped: List[str] = []
    try:
        return ProjectConfig.model_validate(payload), dropped
    except ValidationError as exc:
        errors = exc.errors()
        extra = [e for e in errors if e["type"] == "extra_forbidden"]
        if strict or not extra or len(extra) != len(errors):
            raise ConfigError(_format_errors(errors)) from None
        for error in extra:
            if _drop_key(payload, error["loc"]):
                name = ".".join(str(p) for p in error["loc"])
                dropped.append(name)
                logger.warning("Ignoring unknown config key %s", name)
    try:
        return ProjectConfig.model_validate(payload), dropped
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc.errors())) from None


def _format_errors(errors: List[Dict]) -> str:
    parts = []
    for error in errors:
        location = ".".join(str(p) for p in error["loc"]) or "<root>"
        parts.append(f"{location}: {error['msg']}")
    return "Invalid config: " + "; ".join(parts)


def load_config(path, strict: bool = True) -> LoadedConfig:
    """
    Reads and validates a project config file.

    Args:
        path: JSON file.
        strict (bool): Reject unknown keys (True) or drop them with a warning.

    Raises:
        ConfigError: Unreadable file, malformed JSON, or schema violation.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    try:
        payload = ujson.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"Malformed JSON in {path}: {exc}") from exc
    config, dropped = validate_config(payload, strict=strict)
    return LoadedConfig(config, hashlib.sha256(raw).hexdigest(), path, dropped)
