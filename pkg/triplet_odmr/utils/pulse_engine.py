"""
Pulse programs for pulsed ODMR relaxation measurements.

A sequence starts from the ground state, pumps the triplet with a laser pulse,
optionally permutes the sublevel populations with pi pulses (initialization
sequences 1-6), waits, and reads the ground-state population out with a second
laser pulse. Sequence A stops there; Sequence B inserts a final pi pulse and a
fixed readout delay before the readout.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence as SequenceType, Tuple, Union

import numpy as np
from scipy import optimize

from .errors import NumericalError
from .kinetics import (
    KineticParams,
    OpticalParams,
    Propagator,
    StateVector,
    Transition,
    apply_pi_pulse,
    rate_matrix,
    readout_functional,
)

logger = logging.getLogger(__name__)

SEQUENCE_KINDS = ("A", "B")
INIT_IDS = tuple(range(1, 7))
INIT_PULSES: Dict[int, Tuple[Transition, ...]] = {
    1: (),
    2: (Transition.XY,),
    3: (Transition.XZ,),
    4: (Transition.YZ,),
    5: (Transition.XY, Transition.YZ),
    6: (Transition.YZ, Transition.XY),
}
PLAN_SIZE = 22

DEFAULT_LASER_DURATION = 1e-6
DEFAULT_READOUT_WINDOW = 1e-6
DEFAULT_READOUT_DELAY = 2e-6
DEFAULT_GRID_START = 1e-7
DEFAULT_POINTS_PER_DECADE = 30
GRID_LIFETIME_FACTOR = 10.0


@dataclass(frozen=True)
class Laser:
    """Pump pulse of the given duration (s)."""

    duration: float

    def __post_init__(self):
        _check_duration("Laser duration", self.duration)


@dataclass(frozen=True)
class Microwave:
    """Instantaneous pi pulse on one transition; efficiency is the transferred fraction."""

    transition: Transition
    efficiency: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "transition", Transition.parse(self.transition))
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError(f"Microwave efficiency must be within [0, 1], got {self.efficiency}")


@dataclass(frozen=True)
class Delay:
    """Dark wait of the given duration (s)."""

    duration: float

    def __post_init__(self):
        _check_duration("Delay duration", self.duration)


@dataclass(frozen=True)
class Readout:
    """Readout laser pulse integrated over `window` seconds."""

    window: float

    def __post_init__(self):
        if not (np.isfinite(self.window) and self.window > 0):
            raise ValueError(f"Readout window must be positive, got {self.window}")


PulseElement = Union[Laser, Microwave, Delay, Readout]


def _check_duration(name: str, value: float):
    if not (np.isfinite(value) and value >= 0):
        raise ValueError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True)
class Sequence:
    """
    Ordered pulse program.

    Attributes:
        elements (tuple): Pulse elements, ending with the single Readout.
        label (str): Free-form name.
        kind (str, optional): "A", "B" or None; selects the normalization.
    """

    elements: Tuple[PulseElement, ...]
    label: str = ""
    kind: Optional[str] = None

    def __post_init__(self):
        elements = tuple(self.elements)
        object.__setattr__(self, "elements", elements)
        if self.kind is not None and self.kind not in SEQUENCE_KINDS:
            raise ValueError(f"Sequence kind must be one of {SEQUENCE_KINDS}, got {self.kind!r}")
        if not elements or not isinstance(elements[-1], Readout):
            raise ValueError("A sequence must end with a Readout")
        if sum(isinstance(e, Readout) for e in elements) != 1:
            raise ValueError("A sequence must contain exactly one Readout")
        lasers = [i for i, e in enumerate(elements) if isinstance(e, Laser)]
        microwaves = [i for i, e in enumerate(elements) if isinstance(e, Microwave)]
        if microwaves and (not lasers or microwaves[0] < lasers[0]):
            raise ValueError("A Laser must precede the first Microwave")

    @property
    def readout(self) -> Readout:
        return self.elements[-1]

    def without_microwaves(self) -> "Sequence":
        return Sequence(
            tuple(e for e in self.elements if not isinstance(e, Microwave)),
            label=f"{self.label} control",
        )


@dataclass(frozen=True)
class PulseTiming:
    """
    Laser timing shared by every sequence of a measurement plan.

    Attributes:
        laser_duration (float): Pump pulse length in seconds.
        readout_window (float): Readout integration window in seconds.
    """

    laser_duration: float = DEFAULT_LASER_DURATION
    readout_window: float = DEFAULT_READOUT_WINDOW

    def __post_init__(self):
        _check_duration("laser_duration", self.laser_duration)
        if not self.readout_window > 0:
            raise ValueError("readout_window must be positive")


@dataclass(frozen=True)
class MeasurementSpec:
    """
    One time-dependent measurement of the plan.

    Attributes:
        init_id (int): Initialization sequence 1-6.
        sequence_kind (str): "A" or "B".
        b_pulse_transition (Transition, optional): Transition of the final pi pulse, B only.
        delay_grid (tuple): Delays in seconds.
        readout_delay (float): Wait after the final pi pulse, B only.
    """

    init_id: int
    sequence_kind: str
    b_pulse_transition: Optional[Transition] = None
    delay_grid: Tuple[float, ...] = ()
    readout_delay: float = DEFAULT_READOUT_DELAY

    def __post_init__(self):
        _check_init_id(self.init_id)
        if self.sequence_kind not in SEQUENCE_KINDS:
            raise ValueError(f"sequence_kind must be A or B, got {self.sequence_kind!r}")
        if self.sequence_kind == "B":
            if self.b_pulse_transition is None:
                raise ValueError("Sequence B requires b_pulse_transition")
            object.__setattr__(self, "b_pulse_transition", Transition.parse(self.b_pulse_transition))
        elif self.b_pulse_transition is not None:
            raise ValueError("Sequence A takes no b_pulse_transition")
        grid = tuple(float(d) for d in self.delay_grid)
        for delay in grid:
            _check_duration("delay", delay)
        object.__setattr__(self, "delay_grid", grid)
        _check_duration("readout_delay", self.readout_delay)

    @property
    def key(self) -> str:
        if self.sequence_kind == "A":
            return f"A-init{self.init_id}"
        return f"B-init{self.init_id}-{self.b_pulse_transition.value}"

    def transitions_used(self) -> set:
        used = set(INIT_PULSES[self.init_id])
        if self.b_pulse_transition is not None:
            used.add(self.b_pulse_transition)
        return used

    def build(self, delay: float, timing: "PulseTiming" = PulseTiming()) -> Sequence:
        if self.sequence_kind == "A":
            return build_sequence_a(self.init_id, delay, timing)
        return build_sequence_b(self.init_id, delay, self.b_pulse_transition, self.readout_delay, timing)

    def to_dict(self) -> Dict:
        return {
            "key": self.key,
            "init_id": self.init_id,
            "sequence_kind": self.sequence_kind,
            "b_pulse_transition": self.b_pulse_transition.value if self.b_pulse_transition else None,
            "readout_delay_s": self.readout_delay,
            "n_delays": len(self.delay_grid),
        }

    @classmethod
    def from_dict(cls, payload, delay_grid: SequenceType[float] = ()) -> "MeasurementSpec":
        transition = payload.get("b_pulse_transition")
        return cls(
            init_id=int(payload["init_id"]),
            sequence_kind=payload["sequence_kind"],
            b_pulse_transition=Transition.parse(transition) if transition else None,
            delay_grid=tuple(delay_grid),
            readout_delay=float(payload.get("readout_delay_s", DEFAULT_READOUT_DELAY)),
        )


@dataclass(frozen=True, eq=False)
class SimulatedCurve:
    """Normalized signal of one measurement on its delay grid."""

    delays: np.ndarray
    signal: np.ndarray
    spec: MeasurementSpec

    def __post_init__(self):
        if len(self.delays) != len(self.signal):
            raise ValueError("delays and signal must have the same length")
        if not np.all(np.isfinite(self.signal)):
            raise NumericalError(f"Non-finite signal in curve {self.spec.key}")

    def with_noise(self, sigma: float, rng: np.random.Generator) -> "SimulatedCurve":
        """Returns a copy with additive Gaussian noise of standard deviation sigma."""
        if sigma < 0:
            raise ValueError("Noise sigma must be non-negative")
        noisy = self.signal + rng.normal(0.0, sigma, size=len(self.signal)) if sigma else self.signal
        return SimulatedCurve(self.delays, noisy, self.spec)


def _check_init_id(init_id: int):
    if init_id not in INIT_IDS:
        raise ValueError(f"init_id must be between 1 and 6, got {init_id}")


def build_init_sequence(init_id: int) -> List[Microwave]:
    """
    Pi-pulse prefix of an initialization sequence.

    Ids 2-4 swap one pair; ids 5 and 6 compose two swaps into the cyclic
    permutations, so the six ids realize every permutation of (P_x, P_y, P_z).

    Raises:
        ValueError: If init_id is outside 1-6.
    """
    _check_init_id(init_id)
    return [Microwave(transition) for transition in INIT_PULSES[init_id]]


def build_sequence_a(init_id: int, delay: float, timing: PulseTiming = PulseTiming()) -> Sequence:
    """[Laser, init pi pulses, Delay(delay), Readout]."""
    return Sequence(
        (
            Laser(timing.laser_duration),
            *build_init_sequence(init_id),
            Delay(delay),
            Readout(timing.readout_window),
        ),
        label=f"A-init{init_id}",
        kind="A",
    )


def build_sequence_b(
    init_id: int,
    delay: float,
    transition: Union[Transition, str],
    readout_delay: float = DEFAULT_READOUT_DELAY,
    timing: PulseTiming = PulseTiming(),
) -> Sequence:
    """[Laser, init pi pulses, Delay(delay), Microwave(final), Delay(readout_delay), Readout]."""
    transition = Transition.parse(transition)
    return Sequence(
        (
            Laser(timing.laser_duration),
            *build_init_sequence(init_id),
            Delay(delay),
            Microwave(transition),
            Delay(readout_delay),
            Readout(timing.readout_window),
        ),
        label=f"B-init{init_id}-{transition.value}",
        kind="B",
    )


def control_sequence(seq: Sequence) -> Sequence:
    """
    Reference sequence used to normalize `seq`.

    Sequence A is referenced to the unperturbed ground state (no pump, no
    pulses). Sequence B is referenced to the same program without its final
    final pi pulse. Any other sequence drops all of its microwave pulses.
    """
    if seq.kind == "A":
        kept = tuple(e for e in seq.elements if isinstance(e, (Delay, Readout)))
        return Sequence(kept, label=f"{seq.label} control")
    if seq.kind == "B":
        pulses = [i for i, e in enumerate(seq.elements) if isinstance(e, Microwave)]
        if not pulses:
            raise ValueError("Sequence B has no final pi pulse")
        last = pulses[-1]
        return Sequence(seq.elements[:last] + seq.elements[last + 1:], label=f"{seq.label} control")
    return seq.without_microwaves()


class SequenceRunner:
    """
    Executes pulse programs for one parameter set.

    Laser-on and laser-off propagators and readout functionals are built once
    and reused, which is what makes whole-plan simulation inside a fit cheap.

    Attributes:
        kinetic (KineticParams): Triplet parameters.
        optical (OpticalParams): Pump settings.
    """

    def __init__(self, kinetic: KineticParams, optical: OpticalParams):
        self.kinetic = kinetic
        self.optical = optical
        self._laser_on = Propagator(rate_matrix(kinetic, optical, laser_on=True))
        self._laser_off = Propagator(rate_matrix(kinetic, optical, laser_on=False))
        self._readouts: Dict[float, np.ndarray] = {}

    def readout_weights(self, window: float) -> np.ndarray:
        if window not in self._readouts:
            self._readouts[window] = readout_functional(self.kinetic, self.optical, window)
        return self._readouts[window]

    def state_before_readout(self, seq: Sequence) -> StateVector:
        state = StateVector.ground()
        for element in seq.elements[:-1]:
            if isinstance(element, Laser):
                state = self._laser_on.evolve(state, element.duration)
            elif isinstance(element, Delay):
                state = self._laser_off.evolve(state, element.duration)
            elif isinstance(element, Microwave):
                state = apply_pi_pulse(state, element.transition, element.efficiency)
        return state

    def raw_signal(self, seq: Sequence) -> float:
        """Integrated readout PL of `seq`, un-normalized."""
        state = self.state_before_readout(seq)
        return float(self.readout_weights(seq.readout.window) @ state.populations)

    def signal(self, seq: Sequence) -> float:
        """PL of `seq` divided by the PL of its control sequence."""
        reference = self.raw_signal(control_sequence(seq))
        if reference <= 0:
            raise NumericalError(f"Control PL of {seq.label!r} is zero; raise the pump rate")
        return self.raw_signal(seq) / reference

    def curve(self, spec: MeasurementSpec, timing: PulseTiming = PulseTiming()) -> SimulatedCurve:
        delays = np.asarray(spec.delay_grid, dtype=float)
        signal = np.array([self.signal(spec.build(delay, timing)) for delay in delays])
        return SimulatedCurve(delays=delays, signal=signal, spec=spec)

    def contrast(self, seq_on: Sequence, seq_off: Sequence) -> float:
        if seq_on.without_microwaves().elements != seq_off.without_microwaves().elements:
            raise ValueError("Contrast sequences must differ only in their microwave pulses")
        pl_off = self.raw_signal(seq_off)
        if pl_off == 0:
            raise NumericalError("Reference sequence gives zero PL")
        return (self.raw_signal(seq_on) - pl_off) / pl_off


def simulate_sequence(seq: Sequence, kp: KineticParams, op: OpticalParams) -> float:
    """
    Normalized PL of a pulse program.

    Args:
        seq (Sequence): Program to run from the ground state.
        kp (KineticParams): Triplet parameters.
        op (OpticalParams): Pump settings.

    Returns:
        float: Readout PL divided by the control readout PL.
    """
    return SequenceRunner(kp, op).signal(seq)


def simulate_curve(
    spec: MeasurementSpec,
    kp: KineticParams,
    op: OpticalParams,
    timing: PulseTiming = PulseTiming(),
) -> SimulatedCurve:
    return SequenceRunner(kp, op).curve(spec, timing)


def simulate_plan(
    plan: Iterable[MeasurementSpec],
    kp: KineticParams,
    op: OpticalParams,
    timing: PulseTiming = PulseTiming(),
) -> List[SimulatedCurve]:
    """Simulates every spec with one shared runner, in plan order."""
    runner = SequenceRunner(kp, op)
    return [runner.curve(spec, timing) for spec in plan]


def all_measurements(delay_grid: SequenceType[float], readout_delay: float = DEFAULT_READOUT_DELAY) -> List[MeasurementSpec]:
    """The 24 combinations: 6 Sequence A plus 6 x 3 Sequence B."""
    specs = [MeasurementSpec(i, "A", None, tuple(delay_grid), readout_delay) for i in INIT_IDS]
    for init_id in INIT_IDS:
        for transition in Transition:
            specs.append(MeasurementSpec(init_id, "B", transition, tuple(delay_grid), readout_delay))
    return specs


def generate_plan(
    delay_grid: SequenceType[float],
    readout_delay: float = DEFAULT_READOUT_DELAY,
) -> List[MeasurementSpec]:
    """
    The 22-measurement plan.

    Of the 24 combinations, the two that need all three microwave frequencies
    across the init and final pulses (init 5 or 6 read out on x-z) are dropped.

    Raises:
        ValueError: If the delay grid is empty.
    """
    if len(delay_grid) == 0:
        raise ValueError("delay_grid must not be empty")
    plan = [spec for spec in all_measurements(delay_grid, readout_delay) if len(spec.transitions_used()) < 3]
    assert len(plan) == PLAN_SIZE
    return plan


def contrast(seq_on: Sequence, seq_off: Sequence, kp: KineticParams, op: OpticalParams) -> float:
    """
    Optical contrast Delta PL / PL between two programs.

    Raises:
        ValueError: If the programs differ in anything but microwave pulses.
        NumericalError: If the reference PL is zero.
    """
    return SequenceRunner(kp, op).contrast(seq_on, seq_off)


def default_delay_grid(
    kp: KineticParams,
    points_per_decade: int = DEFAULT_POINTS_PER_DECADE,
    start: float = DEFAULT_GRID_START,
) -> np.ndarray:
    """
    Logarithmic delay grid from `start` to ten times the longest sublevel lifetime.

    Raises:
        ValueError: If some k_i is zero (unbounded lifetime).
    """
    if np.any(kp.k <= 0):
        raise ValueError("All k_i must be positive to size the default delay grid")
    stop = GRID_LIFETIME_FACTOR / kp.k.min()
    if stop <= start:
        raise ValueError("Longest lifetime is shorter than the grid start")
    n_points = int(math.ceil(np.log10(stop / start) * points_per_decade)) + 1
    return np.logspace(np.log10(start), np.log10(stop), n_points)


def sequence_b_contrast(
    runner: SequenceRunner,
    transition: Union[Transition, str],
    readout_delay: float,
    timing: PulseTiming = PulseTiming(),
    init_id: int = 1,
    delay: float = 0.0,
) -> float:
    """Sequence B contrast: normalized signal minus one."""
    seq = build_sequence_b(init_id, delay, transition, readout_delay, timing)
    return runner.signal(seq) - 1.0


def optimize_readout_delay(
    kp: KineticParams,
    op: OpticalParams,
    transition: Union[Transition, str],
    timing: PulseTiming = PulseTiming(),
    init_id: int = 1,
    delay: float = 0.0,
    grid: Optional[SequenceType[float]] = None,
) -> Tuple[float, float]:
    """
    Readout delay that maximizes |contrast| of Sequence B on one transition.

    The grid optimum is refined with a bounded scalar search between its
    neighbours.

    Returns:
        tuple: (readout_delay in s, contrast at that delay).
    """
    runner = SequenceRunner(kp, op)
    grid = np.asarray(default_delay_grid(kp) if grid is None else grid, dtype=float)
    values = np.array([sequence_b_contrast(runner, transition, d, timing, init_id, delay) for d in grid])
    best = int(np.argmax(np.abs(values)))
    lower, upper = grid[max(best - 1, 0)], grid[min(best + 1, len(grid) - 1)]
    if upper > lower:
        result = optimize.minimize_scalar(
            lambda d: -abs(sequence_b_contrast(runner, transition, d, timing, init_id, delay)),
            bounds=(lower, upper),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if -result.fun > abs(values[best]):
            return float(result.x), sequence_b_contrast(runner, transition, result.x, timing, init_id, delay)
    return float(grid[best]), float(values[best])


def kinetic_transition_weights(
    kp: KineticParams,
    op: OpticalParams,
    timing: PulseTiming = PulseTiming(),
    readout_delay: float = DEFAULT_READOUT_DELAY,
) -> Dict[str, float]:
    """
    Signed pulsed-ODMR contrast of each transition (Sequence B, init 1, no delay).

    The result can be passed as SpectrumConfig.transition_weights.
    """
    runner = SequenceRunner(kp, op)
    return {t.value: sequence_b_contrast(runner, t, readout_delay, timing) for t in Transition}

