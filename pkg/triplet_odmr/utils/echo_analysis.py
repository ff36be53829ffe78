"""
Hahn-echo decay and ESEEM analysis.

The envelope is A * exp(-(2 tau / T2)^n) + c, where tau is the pi/2-pi pulse
spacing and 2 tau the total free evolution time; n = 1 unless a stretched
exponential is requested. Residual modulation frequencies are reported with
respect to tau.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft, optimize, signal, stats

from .errors import EchoAnalysisError, InvalidInputError
from .spin_hamiltonian import QUADRUPOLE_LINE_LABELS, DiagonalTensor, quadrupole_frequencies

logger = logging.getLogger(__name__)

MIN_POINTS = 8
TIME_AXES = ("tau", "total_time")
WINDOWS = ("none", "hann")
ZERO_PAD_FACTORS = (1, 2, 4, 8)
MAX_T2 = 1.0
UNIFORM_TOLERANCE = 1e-6
NOISE_FLOOR_MADS = 5.0
LEAKAGE_MARGIN = 2.0
LEAKAGE_ZERO = 1e-12


@dataclass(frozen=True, eq=False)
class EchoTrace:
    """
    Echo amplitude against pulse spacing.

    Attributes:
        tau (np.ndarray): Strictly increasing pulse spacings in seconds.
        amplitude (np.ndarray): Echo amplitude, arbitrary units.
    """

    tau: np.ndarray
    amplitude: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        amplitude = np.asarray(self.amplitude, dtype=float)
        if tau.ndim != 1 or tau.shape != amplitude.shape:
            raise InvalidInputError("tau and amplitude must be 1-D arrays of equal length")
        if tau.size < MIN_POINTS:
            raise InvalidInputError(f"An echo trace needs at least {MIN_POINTS} points, got {tau.size}")
        if not (np.all(np.isfinite(tau)) and np.all(np.isfinite(amplitude))):
            raise InvalidInputError("Echo trace values must be finite")
        if np.any(np.diff(tau) <= 0):
            raise InvalidInputError("tau must be strictly increasing")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "amplitude", amplitude)

    @classmethod
    def from_time_axis(cls, time: Sequence[float], amplitude: Sequence[float], axis: str = "tau") -> "EchoTrace":
        """
        Builds a trace from a declared time axis.

        Args:
            time: Times in seconds.
            amplitude: Echo amplitudes.
            axis (str): "tau" (pulse spacing) or "total_time" (2 tau).
        """
        if axis not in TIME_AXES:
            raise InvalidInputError(f"time_axis must be one of {TIME_AXES}, got {axis!r}")
        time = np.asarray(time, dtype=float)
        return cls(tau=time / 2.0 if axis == "total_time" else time, amplitude=amplitude)


@dataclass(frozen=True)
class EchoEnvelope:
    """
    Fitted decay A * exp(-(2 tau / T2)^n) + c.

    Attributes:
        t2 (float): Coherence time in seconds.
        amplitude (float): A.
        offset (float): c.
        exponent (float): n, 1 for a plain exponential.
        uncertainties (dict): One standard error per fitted quantity.
    """

    t2: float
    amplitude: float
    offset: float
    exponent: float = 1.0
    uncertainties: Dict[str, float] = field(default_factory=dict)

    @property
    def t2_uncertainty(self) -> float:
        return self.uncertainties.get("t2", float("nan"))

    def evaluate(self, tau: np.ndarray) -> np.ndarray:
        return _decay(np.asarray(tau, dtype=float), self.amplitude, self.t2, self.offset, self.exponent)

    def to_dict(self) -> Dict:
        return {
            "t2_s": self.t2,
            "t2_uncertainty_s": self.t2_uncertainty,
            "amplitude": self.amplitude,
            "offset": self.offset,
            "exponent": self.exponent,
            "uncertainties": dict(self.uncertainties),
        }


@dataclass(frozen=True)
class Peak:
    """Spectral peak, optionally assigned to a predicted line."""

    frequency: float
    magnitude: float
    assignment: Optional[str] = None
    predicted_frequency: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "frequency_Hz": self.frequency,
            "magnitude": self.magnitude,
            "assignment": self.assignment,
            "predicted_Hz": self.predicted_frequency,
        }


@dataclass(frozen=True)
class EseemOptions:
    """
    Spectrum settings.

    Attributes:
        window (str): "hann" or "none".
        zero_pad_factor (int): 1, 2, 4 or 8.
        detrend (bool): Remove the residual mean before transforming.
        stretched (bool): Fit the envelope exponent instead of fixing n = 1.
        tolerance (float): Peak-assignment tolerance in Hz.
    """

    window: str = "hann"
    zero_pad_factor: int = 4
    detrend: bool = True
    stretched: bool = False
    tolerance: float = 0.3e6

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise InvalidInputError(f"window must be one of {WINDOWS}")
        if self.zero_pad_factor not in ZERO_PAD_FACTORS:
            raise InvalidInputError(f"zero_pad_factor must be one of {ZERO_PAD_FACTORS}")
        if not self.tolerance > 0:
            raise InvalidInputError("tolerance must be positive")


@dataclass(frozen=True, eq=False)
class EseemResult:
    """Envelope, residual modulation, its spectrum and detected peaks."""

    envelope: EchoEnvelope
    residual: np.ndarray
    frequencies: np.ndarray
    spectrum: np.ndarray
    peaks: List[Peak]

    @property
    def t2(self) -> float:
        return self.envelope.t2

    def to_dict(self) -> Dict:
        return {
            "envelope": self.envelope.to_dict(),
            "residual": self.residual.tolist(),
            "frequencies_Hz": self.frequencies.tolist(),
            "spectrum": self.spectrum.tolist(),
            "peaks": [peak.to_dict() for peak in self.peaks],
        }


def _decay(tau, amplitude, t2, offset, exponent=1.0):
    return amplitude * np.exp(-np.power(2.0 * tau / t2, exponent)) + offset


def _initial_t2(tau: np.ndarray, y: np.ndarray) -> float:
    drop = np.abs(y - y[-1])
    below = np.nonzero(drop < drop[0] / np.e)[0]
    span = tau[-1] - tau[0]
    if below.size and below[0] > 0:
        return 2.0 * (tau[below[0]] - tau[0])
    return 2.0 * span


def fit_envelope(trace: EchoTrace, stretched: bool = False) -> EchoEnvelope:
    """
    Least-squares fit of the echo decay.

    Time and amplitude are rescaled to order one before fitting; uncertainties
    come from the J^T J covariance scaled by the residual variance.

    Args:
        trace (EchoTrace): Echo amplitudes.
        stretched (bool): Also fit the exponent n.

    Returns:
        EchoEnvelope: Fitted decay.

    Raises:
        EchoAnalysisError: Flat trace, non-convergence, or T2 outside (0, 1 s).
    """
    y_scale = np.max(np.abs(trace.amplitude))
    if y_scale == 0 or np.ptp(trace.amplitude) <= 1e-12 * y_scale:
        raise EchoAnalysisError("Echo trace is constant; T2 is unbounded")
    t_scale = trace.tau[-1]
    tau = trace.tau / t_scale
    y = trace.amplitude / y_scale

    guess = [y[0] - y[-1], _initial_t2(tau, y), y[-1]]
    if stretched:
        guess.append(1.0)
    try:
        popt, pcov = optimize.curve_fit(_decay, tau, y, p0=guess, maxfev=10000)
    except RuntimeError as exc:
        raise EchoAnalysisError(f"Envelope fit did not converge: {exc}") from exc

    amplitude, t2, offset = popt[0] * y_scale, popt[1] * t_scale, popt[2] * y_scale
    exponent = float(popt[3]) if stretched else 1.0
    if not (np.isfinite(t2) and 0 < t2 < MAX_T2):
        raise EchoAnalysisError(f"Fitted T2 = {t2:.3g} s is outside (0, {MAX_T2} s)")

    errors = np.sqrt(np.abs(np.diag(pcov))) if np.all(np.isfinite(pcov)) else np.full(len(popt), np.inf)
    uncertainties = {
        "amplitude": float(errors[0] * y_scale),
        "t2": float(errors[1] * t_scale),
        "offset": float(errors[2] * y_scale),
    }
    if stretched:
        uncertainties["exponent"] = float(errors[3])
    logger.info("Fitted T2 = %.4g s (+/- %.2g s)", t2, uncertainties["t2"])
    return EchoEnvelope(
        t2=float(t2),
        amplitude=float(amplitude),
        offset=float(offset),
        exponent=exponent,
        uncertainties=uncertainties,
    )


def extract_modulation(trace: EchoTrace, envelope: EchoEnvelope) -> np.ndarray:
    """Residual modulation: amplitude minus the fitted envelope."""
    return trace.amplitude - envelope.evaluate(trace.tau)


def fft_spectrum(
    residual: Sequence[float],
    tau_grid: Sequence[float],
    window: str = "hann",
    zero_pad_factor: int = 4,
    detrend: bool = True,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Magnitude spectrum of the residual modulation.

    Args:
        residual: Modulation samples.
        tau_grid: Uniformly spaced pulse spacings in seconds.
        window (str): "hann" or "none".
        zero_pad_factor (int): 1, 2, 4 or 8.
        detrend (bool): Subtract the mean first.

    Returns:
        tuple: (frequencies in Hz with respect to tau, |rfft| magnitudes).

    Raises:
        InvalidInputError: Non-uniform grid (resample first), too few points,
            or unsupported window/padding.
    """
    residual = np.asarray(residual, dtype=float)
    tau_grid = np.asarray(tau_grid, dtype=float)
    if residual.shape != tau_grid.shape or residual.ndim != 1:
        raise InvalidInputError("residual and tau_grid must be 1-D arrays of equal length")
    if residual.size < MIN_POINTS:
        raise InvalidInputError(f"Need at least {MIN_POINTS} points for a spectrum")
    if window not in WINDOWS:
        raise InvalidInputError(f"window must be one of {WINDOWS}")
    if zero_pad_factor not in ZERO_PAD_FACTORS:
        raise InvalidInputError(f"zero_pad_factor must be one of {ZERO_PAD_FACTORS}")
    steps = np.diff(tau_grid)
    if not np.allclose(steps, steps[0], rtol=UNIFORM_TOLERANCE, atol=0.0) or steps[0] <= 0:
        raise InvalidInputError("tau grid is not uniform; resample the trace onto a uniform grid first")

    samples = residual - residual.mean() if detrend else residual.copy()
    if window == "hann":
        samples = samples * signal.windows.hann(samples.size, sym=False)
    n_fft = samples.size * zero_pad_factor
    magnitudes = np.abs(fft.rfft(samples, n=n_fft))
    frequencies = fft.rfftfreq(n_fft, d=steps[0])
    return frequencies, magnitudes


def predicted_quadrupole_lines(q: DiagonalTensor) -> Dict[str, float]:
    """Quadrupole transition frequencies in Hz keyed by line label."""
    return {label: f * 1e6 for label, f in zip(QUADRUPOLE_LINE_LABELS, quadrupole_frequencies(q))}


def leakage_profile(n_samples: int, window: str = "hann", zero_pad_factor: int = 4) -> np.ndarray:
    """
    Magnitude response of the analysis window, normalized to 1 at zero offset.

    Entry d is the relative magnitude a unit tone leaks into the bin d padded
    bins away, for a spectrum computed by fft_spectrum() with the same
    settings.
    """
    if window not in WINDOWS:
        raise InvalidInputError(f"window must be one of {WINDOWS}")
    if zero_pad_factor not in ZERO_PAD_FACTORS:
        raise InvalidInputError(f"zero_pad_factor must be one of {ZERO_PAD_FACTORS}")
    taper = signal.windows.hann(n_samples, sym=False) if window == "hann" else np.ones(n_samples)
    kernel = np.abs(fft.rfft(taper, n=n_samples * zero_pad_factor))
    kernel = kernel / kernel[0]
    kernel[kernel < LEAKAGE_ZERO] = 0.0
    return kernel


class _LeakageBound:
    """Upper bound on the leakage of a line d bins away; infinite inside the main lobe."""

    def __init__(self, profile: np.ndarray):
        rising = np.flatnonzero(np.diff(profile) >= 0)
        self.main_lobe = int(rising[0]) if rising.size else profile.size
        # running maximum from the tail: the sidelobe envelope
        self.envelope = np.maximum.accumulate(profile[::-1])[::-1]

    def __call__(self, distance: int) -> float:
        if distance < self.main_lobe:
            return np.inf
        return float(self.envelope[min(distance - 1, self.envelope.size - 1)])


def detect_and_assign_peaks(
    frequencies: Sequence[float],
    magnitudes: Sequence[float],
    predicted: Union[Mapping[str, float], Sequence[float]],
    tolerance: float,
    leakage: Optional[Sequence[float]] = None,
) -> List[Peak]:
    """
    Local maxima above the noise floor (median + 5 MAD), matched to predicted lines.

    With a window leakage profile, a maximum that sits inside the main lobe of
    the zero-frequency bin, or that is no more than LEAKAGE_MARGIN times the
    window leakage of a stronger kept peak (or of its negative-frequency
    image), is treated as leakage and dropped.

    Args:
        frequencies, magnitudes: Spectrum from fft_spectrum().
        predicted: Label -> frequency (Hz), or bare frequencies labelled by
            their formatted value.
        tolerance (float): Maximum distance (Hz) for an assignment.
        leakage: Optional leakage_profile() matching the spectrum settings.

    Returns:
        list of Peak: Sorted by magnitude, strongest first.
    """
    if not tolerance > 0:
        raise InvalidInputError("tolerance must be positive")
    frequencies = np.asarray(frequencies, dtype=float)
    magnitudes = np.asarray(magnitudes, dtype=float)
    if not isinstance(predicted, Mapping):
        predicted = {f"{f / 1e6:.6g} MHz": float(f) for f in predicted}
    if magnitudes.size == 0 or magnitudes.max() <= 0:
        return []

    floor = np.median(magnitudes) + NOISE_FLOOR_MADS * stats.median_abs_deviation(magnitudes)
    indices, _ = signal.find_peaks(magnitudes, height=floor)
    indices = indices[np.argsort(-magnitudes[indices], kind="stable")]

    if leakage is not None:
        bound = _LeakageBound(np.asarray(leakage, dtype=float))
        kept: List[int] = []
        for index in indices:
            if index < bound.main_lobe:
                continue
            leaks = (
                magnitudes[index] <= LEAKAGE_MARGIN * magnitudes[j] * bound(min(abs(index - j), index + j))
                for j in kept
            )
            if not any(leaks):
                kept.append(int(index))
        logger.debug("Dropped %d of %d maxima as window leakage", len(indices) - len(kept), len(indices))
        indices = np.array(kept, dtype=int)

    labels = list(predicted)
    targets = np.array([predicted[label] for label in labels])
    peaks = []
    for index in indices:
        frequency = float(frequencies[index])
        assignment, target = None, None
        if targets.size:
            nearest = int(np.argmin(np.abs(targets - frequency)))
            if abs(targets[nearest] - frequency) <= tolerance:
                assignment, target = labels[nearest], float(targets[nearest])
        peaks.append(Peak(frequency, float(magnitudes[index]), assignment, target))
    peaks.sort(key=lambda p: -p.magnitude)
    logger.debug("Found %d peaks above floor %.3g", len(peaks), floor)
    return peaks


def analyze_echo(
    trace: EchoTrace,
    predicted: Union[Mapping[str, float], Sequence[float]] = (),
    options: EseemOptions = EseemOptions(),
) -> EseemResult:
    """fit_envelope -> extract_modulation -> fft_spectrum -> detect_and_assign_peaks."""
    envelope = fit_envelope(trace, stretched=options.stretched)
    residual = extract_modulation(trace, envelope)
    frequencies, spectrum = fft_spectrum(
        residual, trace.tau, options.window, options.zero_pad_factor, options.detrend
    )
    leakage = leakage_profile(trace.tau.size, options.window, options.zero_pad_factor)
    peaks = detect_and_assign_peaks(frequencies, spectrum, predicted, options.tolerance, leakage)
    return EseemResult(envelope, residual, frequencies, spectrum, peaks)


def synthesize_echo_trace(
    tau: Sequence[float],
    t2: float,
    amplitude: float = 1.0,
    offset: float = 0.0,
    modulation: Sequence[Tuple[float, float]] = (),
    noise: float = 0.0,
    seed: Optional[int] = None,
    exponent: float = 1.0,
) -> EchoTrace:
    """
    Synthetic echo: A exp(-(2 tau/T2)^n) (1 + sum_i d_i cos(2 pi f_i tau)) + c + noise.

    Args:
        tau: Pulse spacings in seconds.
        t2 (float): Coherence time in seconds.
        modulation: (depth, frequency in Hz) pairs.
        noise (float): Standard deviation of additive Gaussian noise.
        seed (int, optional): Seed of the noise generator.
    """
    tau = np.asarray(tau, dtype=float)
    factor = np.ones_like(tau)
    for depth, frequency in modulation:
        factor += depth * np.cos(2.0 * np.pi * frequency * tau)
    values = amplitude * np.exp(-np.power(2.0 * tau / t2, exponent)) * factor + offset
    if noise:
        values = values + np.random.default_rng(seed).normal(0.0, noise, size=tau.size)
    return EchoTrace(tau=tau, amplitude=values)
