"""
Population kinetics of the optical cycle S0 -> S1 -> {T_x, T_y, T_z} -> S0.

Rate matrices use the column convention R[to, from], with the diagonal set to
minus the column sum so that every column sums to zero. A StateVector always
carries the five populations [S0, S1, T_x, T_y, T_z]; in the default reduced
mode S1 is eliminated and the generator is 4x4 over [S0, T_x, T_y, T_z].
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg, optimize

from .errors import KineticsError
from .spin_hamiltonian import canonical_pair

logger = logging.getLogger(__name__)

S0, S1, TX, TY, TZ = range(5)
STATE_LABELS = ("S0", "S1", "Tx", "Ty", "Tz")
TRIPLET_INDEX = {"x": TX, "y": TY, "z": TZ}
REDUCED_INDICES = (S0, TX, TY, TZ)
FULL_INDICES = (S0, S1, TX, TY, TZ)

MODES = ("reduced", "explicit_s1")
DEFAULT_ISC_YIELD = 0.65
DEFAULT_S1_DECAY_RATE = 1.0e8

CONSERVATION_TOLERANCE = 1e-9
NEGATIVE_TOLERANCE = 1e-12
DEFECTIVE_CONDITION = 1e8
# eigenvalues this close to zero, relative to the largest rate, are kernel modes
ZERO_EIGENVALUE_TOLERANCE = 1e-12


class Transition(str, Enum):
    """Microwave transition between two triplet sublevels."""

    XY = "x-y"
    XZ = "x-z"
    YZ = "y-z"

    @classmethod
    def parse(cls, value: Union["Transition", str]) -> "Transition":
        if isinstance(value, cls):
            return value
        return cls(canonical_pair(str(value)))

    @property
    def sublevels(self) -> Tuple[str, str]:
        first, second = self.value.split("-")
        return first, second

    @property
    def state_indices(self) -> Tuple[int, int]:
        first, second = self.sublevels
        return TRIPLET_INDEX[first], TRIPLET_INDEX[second]


def _check_rates(name: str, values: Sequence[float]):
    values = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"{name} must be finite, got {values}")
    if np.any(values < 0):
        raise ValueError(f"{name} must be non-negative, got {values}")


@dataclass(frozen=True)
class KineticParams:
    """
    The nine triplet parameters.

    Attributes:
        k_x, k_y, k_z (float): Sublevel depopulation rates to S0, s^-1.
        w_xy, w_xz, w_yz (float): Symmetric spin-lattice relaxation rates, s^-1.
        P_x, P_y, P_z (float): ISC branching fractions, normalized to sum 1
            on construction.
    """

    k_x: float
    k_y: float
    k_z: float
    w_xy: float
    w_xz: float
    w_yz: float
    P_x: float
    P_y: float
    P_z: float

    def __post_init__(self):
        _check_rates("k", self.k)
        _check_rates("w", self.w)
        _check_rates("P", (self.P_x, self.P_y, self.P_z))
        total = self.P_x + self.P_y + self.P_z
        if not total > 0:
            raise ValueError("Branching fractions P must not all be zero")
        if abs(total - 1.0) > CONSERVATION_TOLERANCE:
            logger.debug("Normalizing branching fractions (sum %.6g)", total)
        object.__setattr__(self, "P_x", self.P_x / total)
        object.__setattr__(self, "P_y", self.P_y / total)
        object.__setattr__(self, "P_z", self.P_z / total)

    @property
    def k(self) -> np.ndarray:
        return np.array([self.k_x, self.k_y, self.k_z])

    @property
    def w(self) -> np.ndarray:
        return np.array([self.w_xy, self.w_xz, self.w_yz])

    @property
    def P(self) -> np.ndarray:
        return np.array([self.P_x, self.P_y, self.P_z])

    @classmethod
    def from_arrays(cls, k: Sequence[float], w: Sequence[float], P: Sequence[float]) -> "KineticParams":
        return cls(*(float(v) for v in (*k, *w, *P)))

    @classmethod
    def from_dict(cls, payload: Mapping) -> "KineticParams":
        """Reads {"k_per_s": [...], "w_per_s": [...], "P": [...]}."""
        for key in ("k_per_s", "w_per_s", "P"):
            if len(payload[key]) != 3:
                raise ValueError(f"{key} needs three values")
        return cls.from_arrays(payload["k_per_s"], payload["w_per_s"], payload["P"])

    def to_dict(self) -> Dict:
        return {"k_per_s": self.k.tolist(), "w_per_s": self.w.tolist(), "P": self.P.tolist()}

    def lifetimes(self) -> np.ndarray:
        """Bare sublevel lifetimes 1/k_i in seconds (inf where k_i = 0)."""
        with np.errstate(divide="ignore"):
            return 1.0 / self.k


@dataclass(frozen=True)
class OpticalParams:
    """
    Optical excitation settings.

    Attributes:
        pump_rate (float): Effective S0 excitation rate while the laser is on, s^-1.
        isc_yield (float): Triplet yield Phi_ISC in [0, 1].
        s1_decay_rate (float): Total S1 decay rate, used in explicit_s1 mode only.
        mode (str): "reduced" or "explicit_s1".
    """

    pump_rate: float
    isc_yield: float = DEFAULT_ISC_YIELD
    s1_decay_rate: float = DEFAULT_S1_DECAY_RATE
    mode: str = "reduced"

    def __post_init__(self):
        if not (np.isfinite(self.pump_rate) and self.pump_rate >= 0):
            raise ValueError(f"pump_rate must be non-negative, got {self.pump_rate}")
        if not 0.0 <= self.isc_yield <= 1.0:
            raise ValueError(f"isc_yield must be within [0, 1], got {self.isc_yield}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "explicit_s1" and not self.s1_decay_rate > 0:
            raise ValueError("s1_decay_rate must be positive in explicit_s1 mode")

    @property
    def reduced(self) -> bool:
        return self.mode == "reduced"

    @classmethod
    def for_pump_fraction(
        cls,
        fraction: float,
        laser_duration: float,
        isc_yield: float = DEFAULT_ISC_YIELD,
        **kwargs,
    ) -> "OpticalParams":
        """
        Chooses the pump rate that moves `fraction` of the ground state into
        the triplet during one laser pulse (triplet decay neglected).

        Args:
            fraction (float): Target fraction in (0, 1).
            laser_duration (float): Pump pulse length in seconds.
            isc_yield (float): Phi_ISC.

        Returns:
            OpticalParams: Parameters with pump_rate = -ln(1 - fraction) / (Phi * t).
        """
        if not 0.0 < fraction < 1.0:
            raise ValueError("fraction must be within (0, 1)")
        if not (laser_duration > 0 and isc_yield > 0):
            raise ValueError("laser_duration and isc_yield must be positive")
        pump = -np.log1p(-fraction) / (isc_yield * laser_duration)
        return cls(pump_rate=float(pump), isc_yield=isc_yield, **kwargs)

    @classmethod
    def from_dict(cls, payload: Mapping) -> "OpticalParams":
        return cls(
            pump_rate=float(payload["pump_per_s"]),
            isc_yield=float(payload.get("isc_yield", DEFAULT_ISC_YIELD)),
            s1_decay_rate=float(payload.get("s1_decay_per_s", DEFAULT_S1_DECAY_RATE)),
            mode=payload.get("mode", "reduced"),
        )

    def to_dict(self) -> Dict:
        return {
            "pump_per_s": self.pump_rate,
            "isc_yield": self.isc_yield,
            "s1_decay_per_s": self.s1_decay_rate,
            "mode": self.mode,
        }


@dataclass(frozen=True, eq=False)
class StateVector:
    """
    Populations [S0, S1, T_x, T_y, T_z].

    Entries down to -1e-12 are clamped to zero; anything more negative, or a
    total further than 1e-9 from one, is rejected.
    """

    populations: np.ndarray

    def __post_init__(self):
        pops = np.array(self.populations, dtype=float).reshape(-1)
        if pops.shape != (5,):
            raise ValueError(f"StateVector needs 5 populations, got {pops.shape[0]}")
        if not np.all(np.isfinite(pops)):
            raise ValueError("Populations must be finite")
        if np.any(pops < -NEGATIVE_TOLERANCE):
            raise ValueError(f"Negative population: {pops}")
        pops[pops < 0] = 0.0
        if abs(pops.sum() - 1.0) > CONSERVATION_TOLERANCE:
            raise ValueError(f"Populations must sum to 1, got {pops.sum():.12g}")
        pops.setflags(write=False)
        object.__setattr__(self, "populations", pops)

    @classmethod
    def ground(cls) -> "StateVector":
        return cls(np.array([1.0, 0.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_mapping(cls, values: Mapping[str, float]) -> "StateVector":
        """Builds a state from e.g. {"S0": 0.4, "Tx": 0.6}; missing entries are 0."""
        unknown = set(values) - set(STATE_LABELS)
        if unknown:
            raise ValueError(f"Unknown state labels: {sorted(unknown)}")
        return cls(np.array([values.get(label, 0.0) for label in STATE_LABELS]))

    @property
    def n_S0(self) -> float:
        return float(self.populations[S0])

    @property
    def n_S1(self) -> float:
        return float(self.populations[S1])

    @property
    def triplet(self) -> np.ndarray:
        return self.populations[TX:]

    def to_dict(self) -> Dict[str, float]:
        return dict(zip(STATE_LABELS, self.populations.tolist()))


def rate_matrix(kp: KineticParams, op: OpticalParams, laser_on: bool) -> np.ndarray:
    """
    Builds the generator of the optical cycle.

    Args:
        kp (KineticParams): Triplet rates and branching.
        op (OpticalParams): Pump, ISC yield and mode.
        laser_on (bool): Whether the pump term is present.

    Returns:
        np.ndarray: 4x4 generator over [S0, Tx, Ty, Tz] in reduced mode,
        5x5 over [S0, S1, Tx, Ty, Tz] in explicit_s1 mode.
    """
    indices = REDUCED_INDICES if op.reduced else FULL_INDICES
    local = {state: i for i, state in enumerate(indices)}
    n = len(indices)
    R = np.zeros((n, n))

    def add(source: int, target: int, rate: float):
        R[local[target], local[source]] += rate

    for sublevel, k_i in zip("xyz", kp.k):
        add(TRIPLET_INDEX[sublevel], S0, k_i)
    for transition, w_ij in zip(Transition, kp.w):
        a, b = transition.state_indices
        add(a, b, w_ij)
        add(b, a, w_ij)

    if op.reduced:
        # the (1 - Phi) pump bypass returns straight to S0 and cancels out
        if laser_on:
            for sublevel, p_i in zip("xyz", kp.P):
                add(S0, TRIPLET_INDEX[sublevel], op.pump_rate * op.isc_yield * p_i)
    else:
        if laser_on:
            add(S0, S1, op.pump_rate)
        add(S1, S0, (1.0 - op.isc_yield) * op.s1_decay_rate)
        for sublevel, p_i in zip("xyz", kp.P):
            add(S1, TRIPLET_INDEX[sublevel], op.isc_yield * p_i * op.s1_decay_rate)

    np.fill_diagonal(R, 0.0)
    np.fill_diagonal(R, -R.sum(axis=0))
    return R


def _indices_for(R: np.ndarray) -> Tuple[int, ...]:
    if R.shape == (4, 4):
        return REDUCED_INDICES
    if R.shape == (5, 5):
        return FULL_INDICES
    raise ValueError(f"Rate matrix must be 4x4 or 5x5, got {R.shape}")


class Propagator:
    """
    Cached exp(R t) for one generator.

    The eigen-decomposition of R is computed once. When the eigenvector matrix
    is ill-conditioned (R close to defective) every call falls back to
    scaling-and-squaring via scipy.linalg.expm.

    Attributes:
        rate_matrix (np.ndarray): The generator.
        uses_eigen (bool): Whether the eigen path is active.
    """

    def __init__(self, R: np.ndarray):
        self.rate_matrix = np.asarray(R, dtype=float)
        self._indices = _indices_for(self.rate_matrix)
        self._eigen = None
        scale = np.abs(self.rate_matrix).max()
        leak = np.abs(self.rate_matrix.sum(axis=0)).max()
        if not leak <= CONSERVATION_TOLERANCE * scale:
            raise KineticsError(
                f"Rate matrix does not conserve population: a column sums to {leak:.3g} s^-1"
            )
        eigenvalues, vectors = linalg.eig(self.rate_matrix)
        eigenvalues[np.abs(eigenvalues) <= ZERO_EIGENVALUE_TOLERANCE * scale] = 0.0
        condition = np.linalg.cond(vectors)
        if np.isfinite(condition) and condition < DEFECTIVE_CONDITION:
            self._eigen = (eigenvalues, vectors, linalg.inv(vectors))
        else:
            logger.debug("Rate matrix near defective (cond %.3g), using expm", condition)

    @property
    def uses_eigen(self) -> bool:
        return self._eigen is not None

    def matrix(self, t: float, use_expm: bool = False) -> np.ndarray:
        """Returns exp(R t)."""
        if use_expm or self._eigen is None:
            return linalg.expm(self.rate_matrix * t)
        eigenvalues, vectors, inverse = self._eigen
        return ((vectors * np.exp(eigenvalues * t)) @ inverse).real

    def project(self, state: StateVector) -> np.ndarray:
        if self._indices is REDUCED_INDICES and state.n_S1 > NEGATIVE_TOLERANCE:
            raise ValueError("Reduced-mode kinetics cannot carry S1 population")
        return state.populations[list(self._indices)]

    def embed(self, values: np.ndarray) -> StateVector:
        full = np.zeros(5)
        full[list(self._indices)] = values
        return StateVector(full)

    def evolve(self, state: StateVector, t: float) -> StateVector:
        """
        Propagates a state for t seconds.

        Raises:
            ValueError: If t < 0.
            KineticsError: If the total changes by more than
                CONSERVATION_TOLERANCE or a population drops below
                -NEGATIVE_TOLERANCE on both paths.
        """
        if t < 0:
            raise ValueError(f"Evolution time must be non-negative, got {t}")
        if t == 0:
            return state
        x = self.project(state)
        y = self.matrix(t) @ x
        if self.uses_eigen and not _is_physical(x, y):
            logger.debug("Eigen propagation failed checks at t=%.3g s, retrying with expm", t)
            y = self.matrix(t, use_expm=True) @ x
        if not _is_physical(x, y):
            raise KineticsError(
                f"Propagation broke conservation/positivity at t={t:.3g} s "
                f"(sum drift {y.sum() - x.sum():.3g}, min {y.min():.3g})"
            )
        y[y < 0] = 0.0
        # rounding below CONSERVATION_TOLERANCE must not accumulate over a sequence
        y *= x.sum() / y.sum()
        return self.embed(y)


def _is_physical(x: np.ndarray, y: np.ndarray) -> bool:
    return (
        np.all(np.isfinite(y))
        and abs(y.sum() - x.sum()) <= CONSERVATION_TOLERANCE
        and y.min() >= -NEGATIVE_TOLERANCE
    )


def evolve(state: StateVector, R: np.ndarray, t: float) -> StateVector:
    """
    Returns expm(R t) applied to state.

    Args:
        state (StateVector): Initial populations.
        R (np.ndarray): Generator from rate_matrix().
        t (float): Duration in seconds, >= 0.

    Returns:
        StateVector: Propagated populations.
    """
    return Propagator(R).evolve(state, t)


def steady_state(R: np.ndarray) -> StateVector:
    """
    Normalized kernel vector of the generator.

    Raises:
        KineticsError: If the kernel is not one-dimensional (disconnected
            kinetics) or the kernel vector has mixed signs.
    """
    R = np.asarray(R, dtype=float)
    indices = _indices_for(R)
    kernel = linalg.null_space(R, rcond=1e-12)
    if kernel.shape[1] != 1:
        raise KineticsError(
            f"Rate matrix kernel has dimension {kernel.shape[1]}; kinetics are disconnected"
        )
    vector = kernel[:, 0] / kernel[:, 0].sum()
    if vector.min() < -1e-9:
        raise KineticsError(f"Steady state has negative populations: {vector}")
    vector = np.clip(vector, 0.0, None)
    full = np.zeros(5)
    full[list(indices)] = vector / vector.sum()
    return StateVector(full)


def apply_pi_pulse(
    state: StateVector,
    transition: Union[Transition, str],
    efficiency: float = 1.0,
) -> StateVector:
    """
    Instantaneous population inversion on one triplet transition.

    Args:
        state (StateVector): Populations before the pulse.
        transition (Transition or str): e.g. Transition.XZ or "x-z".
        efficiency (float): Transferred fraction in [0, 1]; 1 is a perfect swap.

    Returns:
        StateVector: Populations after the pulse.
    """
    if not 0.0 <= efficiency <= 1.0:
        raise ValueError(f"Pulse efficiency must be within [0, 1], got {efficiency}")
    a, b = Transition.parse(transition).state_indices
    pops = state.populations.copy()
    n_a, n_b = pops[a], pops[b]
    pops[a] = n_a + efficiency * (n_b - n_a)
    pops[b] = n_b + efficiency * (n_a - n_b)
    return StateVector(pops)


def readout_functional(kp: KineticParams, op: OpticalParams, window: float) -> np.ndarray:
    """
    Row vector f with pl_signal(state) = f . populations.

    The integral of pump_rate * n_S0 over the window is read off the augmented
    matrix exponential of [[R, 0], [pump_rate * e_S0, 0]].

    Returns:
        np.ndarray: Length-5 weights over [S0, S1, Tx, Ty, Tz].
    """
    if not window > 0:
        raise ValueError(f"Readout window must be positive, got {window}")
    R = rate_matrix(kp, op, laser_on=True)
    indices = _indices_for(R)
    n = R.shape[0]
    augmented = np.zeros((n + 1, n + 1))
    augmented[:n, :n] = R
    augmented[n, 0] = op.pump_rate
    weights = linalg.expm(augmented * window)[n, :n]
    full = np.zeros(5)
    full[list(indices)] = weights
    return full


def pl_signal(state: StateVector, kp: KineticParams, op: OpticalParams, window: float) -> float:
    """
    Integrated fluorescence of a laser readout pulse.

    Args:
        state (StateVector): Populations at the start of the readout.
        kp (KineticParams): Triplet parameters.
        op (OpticalParams): Pump settings.
        window (float): Readout duration in seconds.

    Returns:
        float: Integral of pump_rate * n_S0(t) over the window.
    """
    return float(readout_functional(kp, op, window) @ state.populations)


def cw_contrast(
    kp: KineticParams,
    op: OpticalParams,
    transition: Union[Transition, str],
    drive_rate: float,
) -> float:
    """
    Continuous-wave ODMR contrast Delta PL / PL.

    Compares the laser-on steady state with and without a microwave drive,
    modelled as an extra symmetric rate between the two driven sublevels.

    Args:
        kp (KineticParams): Triplet parameters.
        op (OpticalParams): Pump settings; pump_rate must be positive.
        transition (Transition or str): Driven pair.
        drive_rate (float): Microwave-induced transfer rate, s^-1.

    Returns:
        float: Fractional PL change, positive when the drive brightens the sample.
    """
    if drive_rate < 0:
        raise ValueError("drive_rate must be non-negative")
    if op.pump_rate <= 0:
        raise ValueError("cw contrast needs a positive pump rate")
    R = rate_matrix(kp, op, laser_on=True)
    local = {state: i for i, state in enumerate(_indices_for(R))}
    a, b = (local[i] for i in Transition.parse(transition).state_indices)
    drive = np.zeros_like(R)
    drive[a, b] = drive[b, a] = drive_rate
    drive[a, a] = drive[b, b] = -drive_rate
    pl_off = steady_state(R).n_S0
    pl_on = steady_state(R + drive).n_S0
    return (pl_on - pl_off) / pl_off


def sublevel_decay_time(
    kp: KineticParams,
    sublevel: str,
    n_points: int = 200,
    span: float = 3.0,
    relaxation: bool = True,
) -> float:
    """
    Single-exponential lifetime of the triplet population prepared in one sublevel.

    With relaxation the result differs from 1/k_i whenever w_ij is comparable
    to the depopulation rates; without it the sublevel is isolated and the
    lifetime is 1/k_i.

    Args:
        kp (KineticParams): Triplet parameters.
        sublevel (str): "x", "y" or "z".
        n_points (int): Samples of the decay curve.
        span (float): Sampled window in units of 1/k_i.
        relaxation (bool): Whether w_ij transfers population between sublevels.

    Returns:
        float: Fitted lifetime in seconds.
    """
    if sublevel not in TRIPLET_INDEX:
        raise ValueError(f"sublevel must be one of x, y, z, got {sublevel!r}")
    k_i = kp.k["xyz".index(sublevel)]
    if k_i <= 0:
        raise ValueError(f"k_{sublevel} must be positive to define a decay time")
    if not relaxation:
        kp = KineticParams.from_arrays(kp.k, np.zeros(3), kp.P)
    op = OpticalParams(pump_rate=0.0)
    propagator = Propagator(rate_matrix(kp, op, laser_on=False))
    start = StateVector.from_mapping({"T" + sublevel: 1.0})
    times = np.linspace(0.0, span / k_i, n_points)
    triplet = np.array([propagator.evolve(start, t).triplet.sum() for t in times])

    def model(t, tau):
        return np.exp(-t / tau)

    (tau,), _ = optimize.curve_fit(model, times, triplet, p0=[1.0 / k_i])
    return float(tau)
