"""
Global least-squares fit of the nine triplet parameters to pulsed-ODMR curves.

Every curve is simulated with the same KineticParams; one shared pump scale and,
optionally, one amplitude per curve are nuisance parameters. The optimizer works
in an unconstrained internal vector:

    [log k_x, log k_y, log k_z, log w_xy, log w_xz, log w_yz,
     a_y, a_z, (log pump_scale), (log amplitude_1 ... log amplitude_n)]

where P = softmax(0, a_y, a_z). Rates are positive and P stays on the simplex
without any bound handling, so the Jacobian-based covariance is meaningful.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize, special

from .errors import FitError, NumericalError
from .kinetics import KineticParams, OpticalParams
from .pulse_engine import MeasurementSpec, PulseTiming, SequenceRunner

logger = logging.getLogger(__name__)

KINETIC_NAMES = ("k_x", "k_y", "k_z", "w_xy", "w_xz", "w_yz", "P_x", "P_y", "P_z")
N_RATES = 6
DEFAULT_REL_STEP = 1e-6
MAX_REL_STEP = 0.1
START_SPREAD = float(np.log(3.0))


@dataclass(frozen=True, eq=False)
class MeasurementCurve:
    """
    One measured relaxation curve.

    Attributes:
        spec (MeasurementSpec): Which sequence produced it.
        delays (np.ndarray): Strictly increasing delays in seconds.
        signal (np.ndarray): Normalized PL.
        sigma (np.ndarray, optional): Per-point standard deviation.
    """

    spec: MeasurementSpec
    delays: np.ndarray
    signal: np.ndarray
    sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        delays = np.asarray(self.delays, dtype=float)
        signal = np.asarray(self.signal, dtype=float)
        if delays.ndim != 1 or delays.shape != signal.shape:
            raise ValueError(f"Curve {self.spec.key}: delays and signal must be equal-length 1-D arrays")
        if np.any(np.diff(delays) <= 0):
            raise ValueError(f"Curve {self.spec.key}: delays must be strictly increasing")
        if not np.all(np.isfinite(signal)):
            raise ValueError(f"Curve {self.spec.key}: signal must be finite")
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "signal", signal)
        if self.sigma is not None:
            sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), signal.shape).copy()
            if np.any(~(sigma > 0)):
                raise ValueError(f"Curve {self.spec.key}: sigma must be positive")
            object.__setattr__(self, "sigma", sigma)

    def __len__(self) -> int:
        return len(self.delays)

    @property
    def weights(self) -> np.ndarray:
        return np.ones_like(self.signal) if self.sigma is None else 1.0 / self.sigma

    @classmethod
    def from_simulated(cls, curve, sigma: Optional[float] = None) -> "MeasurementCurve":
        """Wraps a pulse_engine.SimulatedCurve."""
        return cls(spec=curve.spec, delays=curve.delays, signal=curve.signal, sigma=sigma)


@dataclass(frozen=True)
class FitParameterSet:
    """
    Parameters of the global model.

    Attributes:
        kinetic (KineticParams): The nine triplet parameters.
        pump_scale (float): Shared multiplier of the context pump rate.
        per_curve_amplitude (tuple, optional): One multiplier per curve.
    """

    kinetic: KineticParams
    pump_scale: float = 1.0
    per_curve_amplitude: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if not self.pump_scale > 0:
            raise ValueError("pump_scale must be positive")
        if self.per_curve_amplitude is not None:
            amplitudes = tuple(float(a) for a in self.per_curve_amplitude)
            if any(not a > 0 for a in amplitudes):
                raise ValueError("Per-curve amplitudes must be positive")
            object.__setattr__(self, "per_curve_amplitude", amplitudes)

    def amplitude(self, index: int) -> float:
        return 1.0 if self.per_curve_amplitude is None else self.per_curve_amplitude[index]

    def to_dict(self) -> Dict:
        return {
            "kinetics": self.kinetic.to_dict(),
            "pump_scale": self.pump_scale,
            "per_curve_amplitude": list(self.per_curve_amplitude) if self.per_curve_amplitude else None,
        }


@dataclass(frozen=True)
class ModelContext:
    """Fixed (not fitted) inputs of the model: pump settings and laser timing."""

    optical: OpticalParams
    timing: PulseTiming = PulseTiming()

    def optical_for(self, params: FitParameterSet) -> OpticalParams:
        return replace(self.optical, pump_rate=self.optical.pump_rate * params.pump_scale)


@dataclass(frozen=True)
class FitOptions:
    """
    Optimizer settings.

    Attributes:
        multi_start (int): Number of starts; the first is the given initial point.
        seed (int): Seed of the start spread.
        perturbation (float): Half-width of the uniform spread of log-rates and P
            logits around each start center; log 3 covers a factor of three.
        max_nfev (int): Function-evaluation cap per start.
        ftol, xtol (float): Relative cost and step tolerances.
        rel_step (float): Central-difference step in the internal parameters.
        fit_pump_scale (bool): Whether pump_scale is free.
        per_curve_amplitude (bool): Whether every curve gets a free amplitude.
        threads (int): Worker threads for per-curve simulation.
        rate_unit (float): Unit of the internal log-rates, in s^-1.
        tie_tolerance (float): Relative chi2 difference under which two starts tie.
    """

    multi_start: int = 8
    seed: int = 0
    perturbation: float = START_SPREAD
    max_nfev: int = 500
    ftol: float = 1e-10
    xtol: float = 1e-12
    rel_step: float = DEFAULT_REL_STEP
    fit_pump_scale: bool = True
    per_curve_amplitude: bool = False
    threads: int = 1
    rate_unit: float = 1.0
    tie_tolerance: float = 1e-9

    def __post_init__(self):
        if self.multi_start < 1:
            raise ValueError("multi_start must be at least 1")
        if not 0 < self.rel_step <= MAX_REL_STEP:
            raise ValueError(f"rel_step must be within (0, {MAX_REL_STEP}]")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if not self.rate_unit > 0:
            raise ValueError("rate_unit must be positive")


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """
    Covariance over the internal parameters.

    Attributes:
        covariance (np.ndarray): Variance-scaled (J^T J)^-1, or its pseudo-inverse.
        rank_deficient (bool): True when J lacks full column rank.
        condition_number (float): Condition number of J^T J.
        rank (int): Numerical column rank of J.
        null_space (np.ndarray): Basis of the unidentifiable directions.
    """

    covariance: np.ndarray
    rank_deficient: bool
    condition_number: float
    rank: int
    null_space: np.ndarray


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of a global fit; see to_dict() for the serialized form."""

    best_fit: FitParameterSet
    covariance: np.ndarray
    physical_covariance: np.ndarray
    parameter_names: Tuple[str, ...]
    uncertainties: Dict[str, float]
    chi2: float
    dof: int
    per_curve_residuals: List[np.ndarray]
    per_curve_model: List[np.ndarray]
    converged: bool
    n_iterations: int
    condition_number: float
    rank_deficient: bool
    message: str = ""
    start_index: int = 0
    ties: int = 0
    start_chi2: Tuple[float, ...] = field(default_factory=tuple)

    @property
    def reduced_chi2(self) -> float:
        return self.chi2 / self.dof

    def to_dict(self) -> Dict:
        return {
            "best_fit": self.best_fit.to_dict(),
            "parameter_names": list(self.parameter_names),
            "uncertainties": {k: _json_float(v) for k, v in self.uncertainties.items()},
            "covariance": [[_json_float(v) for v in row] for row in self.physical_covariance],
            "chi2": self.chi2,
            "dof": self.dof,
            "reduced_chi2": self.reduced_chi2,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "condition_number": _json_float(self.condition_number),
            "rank_deficient": self.rank_deficient,
            "message": self.message,
            "start_index": self.start_index,
            "ties": self.ties,
            "start_chi2": [_json_float(v) for v in self.start_chi2],
        }


def _json_float(value: float):
    value = float(value)
    return value if np.isfinite(value) else str(value)


def finite_difference_jacobian(
    func: Callable[[np.ndarray], np.ndarray],
    x: np.ndarray,
    rel_step: float = DEFAULT_REL_STEP,
) -> np.ndarray:
    """
    Central-difference Jacobian with step rel_step * max(1, |x_j|).

    Args:
        func (callable): Vector function of a 1-D array.
        x (np.ndarray): Evaluation point.
        rel_step (float): Relative step in (0, 0.1].

    Returns:
        np.ndarray: Shape (len(func(x)), len(x)).
    """
    if not 0 < rel_step <= MAX_REL_STEP:
        raise ValueError(f"rel_step must be within (0, {MAX_REL_STEP}]")
    x = np.asarray(x, dtype=float)
    columns = []
    for j in range(x.size):
        step = rel_step * max(1.0, abs(x[j]))
        forward, backward = x.copy(), x.copy()
        forward[j] += step
        backward[j] -= step
        columns.append((np.asarray(func(forward)) - np.asarray(func(backward))) / (forward[j] - backward[j]))
    return np.column_stack(columns)


def covariance_from_jacobian(J: np.ndarray, chi2: float, dof: int) -> CovarianceEstimate:
    """
    cov = (J^T J)^-1 * chi2 / dof.

    A rank-deficient J falls back to the pseudo-inverse and is flagged; the
    unidentifiable directions are returned as a null-space basis.

    Raises:
        FitError: If dof <= 0 or J is not finite.
    """
    J = np.asarray(J, dtype=float)
    if dof <= 0:
        raise FitError(f"Degrees of freedom must be positive, got {dof}")
    if not np.all(np.isfinite(J)):
        raise FitError("Jacobian has non-finite entries")
    singular_values = linalg.svdvals(J)
    tolerance = singular_values[0] * max(J.shape) * np.finfo(float).eps if singular_values.size else 0.0
    rank = int(np.sum(singular_values > tolerance))
    n_params = J.shape[1]
    rank_deficient = rank < n_params
    with np.errstate(divide="ignore"):
        condition = float((singular_values[0] / singular_values[-1]) ** 2) if rank else np.inf
    scale = chi2 / dof
    if rank_deficient:
        logger.warning("Jacobian is rank deficient (rank %d of %d); using pseudo-inverse", rank, n_params)
        covariance = linalg.pinv(J.T @ J) * scale
        null = linalg.null_space(J, rcond=tolerance / singular_values[0] if rank else None)
    else:
        covariance = linalg.inv(J.T @ J) * scale
        null = np.zeros((n_params, 0))
    covariance = 0.5 * (covariance + covariance.T)
    return CovarianceEstimate(covariance, rank_deficient, condition, rank, null)


class FitProblem:
    """
    Residuals and Jacobian of one data set in the internal parameterization.

    Attributes:
        data (list of MeasurementCurve): Curves, in residual order.
        context (ModelContext): Fixed optical inputs.
        options (FitOptions): Which nuisance parameters are free, threading.
    """

    def __init__(
        self,
        data: Sequence[MeasurementCurve],
        context: ModelContext,
        options: FitOptions = FitOptions(),
        executor: Optional[ThreadPoolExecutor] = None,
    ):
        if not data:
            raise FitError("No measurement curves to fit")
        self.data = list(data)
        self.context = context
        self.options = options
        self.executor = executor
        self._offsets = np.cumsum([0] + [len(curve) for curve in self.data])
        self._fixed_pump_scale = 1.0

    @property
    def n_points(self) -> int:
        return int(self._offsets[-1])

    @property
    def parameter_names(self) -> Tuple[str, ...]:
        names = ["log_k_x", "log_k_y", "log_k_z", "log_w_xy", "log_w_xz", "log_w_yz", "a_y", "a_z"]
        if self.options.fit_pump_scale:
            names.append("log_pump_scale")
        if self.options.per_curve_amplitude:
            names += [f"log_amplitude[{curve.spec.key}]" for curve in self.data]
        return tuple(names)

    @property
    def physical_names(self) -> Tuple[str, ...]:
        names = list(KINETIC_NAMES)
        if self.options.fit_pump_scale:
            names.append("pump_scale")
        if self.options.per_curve_amplitude:
            names += [f"amplitude[{curve.spec.key}]" for curve in self.data]
        return tuple(names)

    @property
    def n_free(self) -> int:
        return len(self.parameter_names)

    @property
    def dof(self) -> int:
        return self.n_points - self.n_free

    def pack(self, params: FitParameterSet) -> np.ndarray:
        """Maps a parameter set to the internal vector."""
        kp = params.kinetic
        rates = np.concatenate([kp.k, kp.w])
        if np.any(rates <= 0):
            raise FitError("Initial rates must be strictly positive for the log parameterization")
        if np.any(kp.P <= 0):
            raise FitError("Initial branching fractions must be strictly positive")
        logits = np.log(kp.P[1:]) - np.log(kp.P[0])
        theta = [np.log(rates / self.options.rate_unit), logits]
        if self.options.fit_pump_scale:
            theta.append([np.log(params.pump_scale)])
        else:
            self._fixed_pump_scale = params.pump_scale
        if self.options.per_curve_amplitude:
            amplitudes = [params.amplitude(i) for i in range(len(self.data))]
            theta.append(np.log(amplitudes))
        return np.concatenate(theta)

    def unpack(self, theta: np.ndarray) -> FitParameterSet:
        """Maps an internal vector back to a parameter set."""
        theta = np.asarray(theta, dtype=float)
        rates = self.options.rate_unit * np.exp(theta[:N_RATES])
        P = special.softmax(np.concatenate([[0.0], theta[N_RATES:N_RATES + 2]]))
        kinetic = KineticParams.from_arrays(rates[:3], rates[3:], P)
        index = N_RATES + 2
        pump_scale = self._fixed_pump_scale
        if self.options.fit_pump_scale:
            pump_scale = float(np.exp(theta[index]))
            index += 1
        amplitudes = None
        if self.options.per_curve_amplitude:
            amplitudes = tuple(np.exp(theta[index:index + len(self.data)]))
        return FitParameterSet(kinetic=kinetic, pump_scale=pump_scale, per_curve_amplitude=amplitudes)

    def physical_jacobian(self, theta: np.ndarray) -> np.ndarray:
        """d(physical parameters)/d(internal parameters), for the delta method."""
        params = self.unpack(theta)
        n_free = self.n_free
        G = np.zeros((len(self.physical_names), n_free))
        rates = np.concatenate([params.kinetic.k, params.kinetic.w])
        G[np.arange(N_RATES), np.arange(N_RATES)] = rates
        P = params.kinetic.P
        for j, logit in enumerate((1, 2)):
            G[N_RATES:N_RATES + 3, N_RATES + j] = P * ((np.arange(3) == logit) - P[logit])
        row, column = N_RATES + 3, N_RATES + 2
        if self.options.fit_pump_scale:
            G[row, column] = params.pump_scale
            row, column = row + 1, column + 1
        if self.options.per_curve_amplitude:
            for i, amplitude in enumerate(params.per_curve_amplitude):
                G[row + i, column + i] = amplitude
        return G

    def model(self, params: FitParameterSet) -> List[np.ndarray]:
        """Simulated signal of every curve."""
        try:
            runner = SequenceRunner(params.kinetic, self.context.optical_for(params))
            runner.readout_weights(self.context.timing.readout_window)
        except (NumericalError, ValueError) as exc:
            raise FitError(f"Model setup failed: {exc}") from exc

        def simulate(index: int) -> np.ndarray:
            curve = self.data[index]
            try:
                values = [runner.signal(curve.spec.build(d, self.context.timing)) for d in curve.delays]
            except (NumericalError, ValueError) as exc:
                raise FitError(f"Simulation failed for curve {index} ({curve.spec.key}): {exc}") from exc
            return params.amplitude(index) * np.asarray(values)

        indices = range(len(self.data))
        if self.executor is not None:
            return list(self.executor.map(simulate, indices))
        return [simulate(i) for i in indices]

    def residuals_for(self, params: FitParameterSet) -> np.ndarray:
        model = self.model(params)
        return np.concatenate(
            [(m - curve.signal) * curve.weights for m, curve in zip(model, self.data)]
        )

    def residuals(self, theta: np.ndarray) -> np.ndarray:
        return self.residuals_for(self.unpack(theta))

    def jacobian(self, theta: np.ndarray, rel_step: Optional[float] = None) -> np.ndarray:
        """
        Central-difference Jacobian of the residuals.

        Raises:
            FitError: Naming the parameter and curve of the first non-finite entry.
        """
        J = finite_difference_jacobian(self.residuals, theta, rel_step or self.options.rel_step)
        bad = np.argwhere(~np.isfinite(J))
        if bad.size:
            row, column = bad[0]
            curve = int(np.searchsorted(self._offsets, row, side="right") - 1)
            raise FitError(
                f"Non-finite Jacobian entry for parameter {self.parameter_names[column]} "
                f"in curve {curve} ({self.data[curve].spec.key})"
            )
        return J

    def split(self, vector: np.ndarray) -> List[np.ndarray]:
        """Splits a flat residual vector back into per-curve arrays."""
        return [vector[a:b] for a, b in zip(self._offsets[:-1], self._offsets[1:])]

    def uncertainties(self, theta: np.ndarray, estimate: CovarianceEstimate) -> Tuple[np.ndarray, Dict[str, float]]:
        """Physical covariance and standard errors via the delta method."""
        G = self.physical_jacobian(theta)
        physical = G @ estimate.covariance @ G.T
        errors = np.sqrt(np.clip(np.diag(physical), 0.0, None))
        if estimate.rank_deficient and estimate.null_space.size:
            projection = np.abs(G @ estimate.null_space)
            scale = np.abs(G).max(axis=1, keepdims=True) + np.finfo(float).tiny
            unidentifiable = np.any(projection > 1e-8 * scale, axis=1)
            errors[unidentifiable] = np.inf
        return physical, dict(zip(self.physical_names, errors.tolist()))


def residuals(
    params: FitParameterSet,
    data: Sequence[MeasurementCurve],
    context: ModelContext,
    options: FitOptions = FitOptions(),
) -> np.ndarray:
    """
    Concatenated (model - data) / sigma over all curves.

    Args:
        params (FitParameterSet): Model parameters.
        data (list of MeasurementCurve): Curves; sigma defaults to 1.
        context (ModelContext): Pump settings and timing.

    Returns:
        np.ndarray: Residual vector of length sum(len(curve)).
    """
    return FitProblem(data, context, options).residuals_for(params)


def jacobian_fd(
    params: FitParameterSet,
    data: Sequence[MeasurementCurve],
    context: ModelContext,
    rel_step: float = DEFAULT_REL_STEP,
    options: FitOptions = FitOptions(),
) -> np.ndarray:
    """Central-difference Jacobian of residuals() in the internal parameterization."""
    problem = FitProblem(data, context, options)
    return problem.jacobian(problem.pack(params), rel_step)


def estimate_covariance(
    params: FitParameterSet,
    data: Sequence[MeasurementCurve],
    context: ModelContext,
    options: FitOptions = FitOptions(),
    absolute_sigma: bool = True,
) -> Tuple[CovarianceEstimate, Dict[str, float]]:
    """
    Covariance and standard errors at a given parameter set, without optimizing.

    With absolute_sigma the curve sigmas are taken at face value (chi2/dof is
    not applied), which measures the information content of a measurement set.

    Returns:
        tuple: (CovarianceEstimate, physical standard errors by name).
    """
    problem = FitProblem(data, context, options)
    if problem.dof <= 0:
        raise FitError(f"Not enough points ({problem.n_points}) for {problem.n_free} parameters")
    theta = problem.pack(params)
    J = problem.jacobian(theta)
    chi2 = float(problem.dof) if absolute_sigma else float(np.sum(problem.residuals(theta) ** 2))
    estimate = covariance_from_jacobian(J, chi2, problem.dof)
    _, errors = problem.uncertainties(theta, estimate)
    return estimate, errors


def single_exponential_rate(curve: MeasurementCurve) -> Optional[float]:
    """
    Recovery rate of a Sequence A curve from a fit of 1 - signal to a*exp(-k t).

    Returns None when the curve shows no recovery or the fit does not converge.
    """
    depth = 1.0 - curve.signal
    if depth.max() <= 0:
        return None
    below = np.flatnonzero(depth < 0.5 * depth.max())
    half_time = curve.delays[below[0]] if below.size else curve.delays[-1]
    # rate in units of the half-time guess keeps both parameters of order one
    unit = np.log(2.0) / max(half_time, curve.delays[0], np.finfo(float).tiny)
    try:
        popt, _ = optimize.curve_fit(
            lambda t, a, k: a * np.exp(-k * unit * t),
            curve.delays,
            depth,
            p0=(depth.max(), 1.0),
            bounds=([0.0, 0.0], [np.inf, np.inf]),
            maxfev=5000,
        )
    except (RuntimeError, ValueError):
        return None
    rate = float(popt[1] * unit)
    return rate if np.isfinite(rate) and rate > 0 else None


def seeded_depopulation_rates(data: Sequence[MeasurementCurve]) -> Optional[np.ndarray]:
    """
    (k_x, k_y, k_z) guessed from single-exponential fits of the Sequence A curves.

    Each init id puts the largest share of the triplet population in a different
    sublevel, so the fastest curve bounds k_x from below and the slowest bounds
    k_z from above. Returns None with fewer than two usable curves.
    """
    rates = [single_exponential_rate(c) for c in data if c.spec.sequence_kind == "A"]
    rates = sorted(r for r in rates if r is not None)
    if len(rates) < 2:
        return None
    return np.array([rates[-1], float(np.median(rates)), rates[0]])


def _start_points(problem: FitProblem, theta0: np.ndarray, options: FitOptions) -> List[np.ndarray]:
    centers = [theta0]
    seeded = seeded_depopulation_rates(problem.data) if options.multi_start > 1 else None
    if seeded is not None:
        center = theta0.copy()
        center[:3] = np.log(seeded / options.rate_unit)
        centers.append(center)
        logger.info("Rates seeded from single exponentials: %s s^-1", np.array2string(seeded, precision=4))
    starts = list(centers)[: options.multi_start]
    # only rates and P logits are spread; nuisance parameters keep their start
    n_spread = N_RATES + 2
    rng = np.random.default_rng(options.seed)
    for index in range(options.multi_start - len(starts)):
        start = centers[index % len(centers)].copy()
        start[:n_spread] += rng.uniform(-options.perturbation, options.perturbation, size=n_spread)
        starts.append(start)
    return starts


def fit(
    data: Sequence[MeasurementCurve],
    initial: FitParameterSet,
    context: ModelContext,
    options: FitOptions = FitOptions(),
) -> FitResult:
    """
    Levenberg-Marquardt global fit with multi-start.

    Args:
        data (list of MeasurementCurve): Curves to fit together.
        initial (FitParameterSet): Starting point. The second start replaces
            its depopulation rates with single-exponential estimates from the
            Sequence A curves; the rest spread both centers uniformly in log space.
        context (ModelContext): Pump settings and timing.
        options (FitOptions): Tolerances, starts, nuisance switches.

    Returns:
        FitResult: Best start by chi2, with covariance at the optimum.

    Raises:
        FitError: If dof <= 0, the model is not finite at the initial point,
            or every start fails.
    """
    executor = ThreadPoolExecutor(max_workers=options.threads) if options.threads > 1 else None
    try:
        problem = FitProblem(data, context, options, executor)
        if problem.dof <= 0:
            raise FitError(f"Not enough points ({problem.n_points}) for {problem.n_free} free parameters")
        theta0 = problem.pack(initial)
        if not np.all(np.isfinite(problem.residuals(theta0))):
            raise FitError("Model is not finite at the initial point")

        outcomes = []
        for index, start in enumerate(_start_points(problem, theta0, options)):
            try:
                result = optimize.least_squares(
                    problem.residuals,
                    start,
                    jac=problem.jacobian,
                    method="lm",
                    ftol=options.ftol,
                    xtol=options.xtol,
                    max_nfev=options.max_nfev,
                    x_scale="jac",
                )
            except (FitError, NumericalError, ValueError) as exc:
                logger.warning("Start %d failed: %s", index, exc)
                continue
            chi2 = float(np.sum(result.fun ** 2))
            logger.info("Start %d: chi2 %.6g after %d evaluations", index, chi2, result.nfev)
            outcomes.append((chi2, index, result))
        if not outcomes:
            raise FitError("Every fit start failed")

        chi2, best_index, best = min(outcomes, key=lambda item: (item[0], item[1]))
        ties = sum(
            1
            for other_chi2, index, other in outcomes
            if index != best_index
            and abs(other_chi2 - chi2) <= options.tie_tolerance * max(chi2, np.finfo(float).tiny)
            and not np.allclose(other.x, best.x, rtol=1e-3, atol=1e-3)
        )
        if ties:
            logger.warning("%d other start(s) reached the same chi2 at different parameters", ties)

        J = problem.jacobian(best.x)
        estimate = covariance_from_jacobian(J, chi2, problem.dof)
        physical, errors = problem.uncertainties(best.x, estimate)
        best_fit = problem.unpack(best.x)
        model = problem.model(best_fit)
    finally:
        if executor is not None:
            executor.shutdown()

    return FitResult(
        best_fit=best_fit,
        covariance=estimate.covariance,
        physical_covariance=physical,
        parameter_names=problem.physical_names,
        uncertainties=errors,
        chi2=chi2,
        dof=problem.dof,
        per_curve_residuals=problem.split(best.fun),
        per_curve_model=model,
        converged=bool(best.status > 0),
        n_iterations=int(best.nfev),
        condition_number=estimate.condition_number,
        rank_deficient=estimate.rank_deficient,
        message=str(best.message),
        start_index=best_index,
        ties=ties,
        start_chi2=tuple(c for c, _, _ in sorted(outcomes, key=lambda item: item[1])),
    )
