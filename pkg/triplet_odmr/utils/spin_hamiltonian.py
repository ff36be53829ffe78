"""
Zero-field spin Hamiltonian of an S=1 triplet coupled to up to two I=1 nuclei.

Operators are written in the Cartesian triplet basis (|T_x>, |T_y>, |T_z>),
the zero-field eigenbasis of the bare triplet, with (S_k)_ab = -i eps_kab.
Nuclear I=1 operators use the same Cartesian form. In that basis every S_k^2,
I_k^2 and S_k I_k product is real, so the Hamiltonian is real symmetric and its
eigenvectors can always be taken real.

All frequencies are in MHz. Tensors are diagonal in the zero-field-splitting
principal frame.
"""

import logging
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, stats

logger = logging.getLogger(__name__)

SUBLEVELS = ("x", "y", "z")
TRANSITION_PAIRS = ("x-y", "x-z", "y-z")
LINE_SHAPES = ("gaussian", "lorentzian")
QUADRUPOLE_LINE_LABELS = ("Qxx-Qyy", "Qyy-Qzz", "Qxx-Qzz")
ZFS_FRAME = "zfs"

MAX_NUCLEI = 2
HERMITICITY_TOLERANCE = 1e-9
DEFAULT_PRUNE_THRESHOLD = 1e-6
QUADRUPOLE_TRACE_WARNING = 0.1
FWHM_PER_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))


def canonical_pair(label: str) -> str:
    """
    Normalizes a sublevel-pair label such as "z-x", "xz" or "x<->z" to "x-z".

    Args:
        label (str): Pair label naming two sublevels.

    Returns:
        str: The label with the two sublevels in x, y, z order joined by "-".

    Raises:
        ValueError: If the label does not name exactly two sublevels.
    """
    letters = [c for c in label.lower() if c in SUBLEVELS]
    if len(letters) != 2:
        raise ValueError(f"Not a sublevel pair: {label!r}")
    first, second = sorted(letters, key=SUBLEVELS.index)
    return f"{first}-{second}"


@dataclass(frozen=True)
class ZfsParams:
    """
    Zero-field splitting parameters.

    Attributes:
        D (float): Axial parameter in MHz.
        E (float): Rhombic parameter in MHz, signed.
    """

    D: float
    E: float

    def __post_init__(self):
        if not (np.isfinite(self.D) and np.isfinite(self.E)):
            raise ValueError("D and E must be finite")
        if self.D < 0:
            raise ValueError(f"D must be positive, got {self.D}")
        if abs(self.E) > self.D / 3.0:
            raise ValueError(f"|E| must not exceed D/3 (D={self.D}, E={self.E})")


@dataclass(frozen=True)
class DiagonalTensor:
    """
    Interaction tensor diagonal in the zero-field-splitting frame.

    Attributes:
        xx, yy, zz (float): Principal components in MHz.
        frame (str): Always "zfs"; other frames are not supported.
    """

    xx: float
    yy: float
    zz: float
    frame: str = ZFS_FRAME

    def __post_init__(self):
        if not np.all(np.isfinite(self.components)):
            raise ValueError(f"Tensor components must be finite: {self.components}")
        if self.frame != ZFS_FRAME:
            raise ValueError(f"Only tensors in the {ZFS_FRAME!r} frame are supported")

    @property
    def components(self) -> Tuple[float, float, float]:
        return (self.xx, self.yy, self.zz)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "DiagonalTensor":
        if len(values) != 3:
            raise ValueError(f"Expected three tensor components, got {len(values)}")
        return cls(float(values[0]), float(values[1]), float(values[2]))

    def check_traceless(self, name: str = "quadrupole") -> bool:
        """
        Warns when the tensor trace is not close to zero.

        Returns:
            bool: True when |trace| <= 0.1 * max |component|.
        """
        trace = sum(self.components)
        largest = max(abs(c) for c in self.components)
        if largest > 0 and abs(trace) > QUADRUPOLE_TRACE_WARNING * largest:
            logger.warning("%s tensor trace %.4g MHz is not close to zero", name, trace)
            return False
        return True


@dataclass(frozen=True)
class NucleusSpec:
    """
    A spin-1 nucleus (e.g. 14N) coupled to the triplet.

    Attributes:
        hyperfine (DiagonalTensor): Hyperfine tensor A in MHz.
        quadrupole (DiagonalTensor): Quadrupole tensor Q in MHz.
        spin (int): Nuclear spin quantum number, fixed at 1.
    """

    hyperfine: DiagonalTensor
    quadrupole: DiagonalTensor
    spin: int = 1

    def __post_init__(self):
        if self.spin != 1:
            raise ValueError(f"Only I=1 nuclei are supported, got I={self.spin}")
        self.quadrupole.check_traceless()


@dataclass(frozen=True)
class SpinSystem:
    """
    Triplet plus its coupled nuclei.

    Attributes:
        zfs (ZfsParams): Zero-field splitting.
        nuclei (tuple of NucleusSpec): Zero, one or two I=1 nuclei. Equivalent
            nuclei are simply listed twice.
    """

    zfs: ZfsParams
    nuclei: Tuple[NucleusSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nuclei", tuple(self.nuclei))
        if len(self.nuclei) > MAX_NUCLEI:
            raise ValueError(f"At most {MAX_NUCLEI} nuclei are supported")

    @property
    def nuclear_dimension(self) -> int:
        return 3 ** len(self.nuclei)

    @property
    def dimension(self) -> int:
        return 3 * self.nuclear_dimension

    @classmethod
    def from_dict(cls, payload: Mapping) -> "SpinSystem":
        """
        Builds a system from the JSON form
        {"D_MHz": ..., "E_MHz": ..., "nuclei": [{"A_MHz": [...], "Q_MHz": [...]}]}.
        """
        nuclei = [
            NucleusSpec(
                hyperfine=DiagonalTensor.from_sequence(n["A_MHz"]),
                quadrupole=DiagonalTensor.from_sequence(n["Q_MHz"]),
            )
            for n in payload.get("nuclei", [])
        ]
        zfs = ZfsParams(float(payload["D_MHz"]), float(payload["E_MHz"]))
        return cls(zfs=zfs, nuclei=tuple(nuclei))

    def to_dict(self) -> Dict:
        return {
            "D_MHz": self.zfs.D,
            "E_MHz": self.zfs.E,
            "nuclei": [
                {"A_MHz": list(n.hyperfine.components), "Q_MHz": list(n.quadrupole.components)}
                for n in self.nuclei
            ],
        }


@dataclass(frozen=True, eq=False)
class EigenSolution:
    """
    Eigen-decomposition of a Hamiltonian.

    Attributes:
        energies (np.ndarray): Ascending eigenvalues in MHz.
        states (np.ndarray): Columns are the matching orthonormal eigenvectors.
    """

    energies: np.ndarray
    states: np.ndarray


@dataclass(frozen=True)
class TransitionLine:
    """
    One stick of the spectrum.

    Attributes:
        frequency (float): Transition frequency in MHz (>= 0).
        intensity (float): Relative intensity (>= 0).
        lower_index (int): Index of the lower state.
        upper_index (int): Index of the upper state.
        pair (str): Dominant sublevel pair, e.g. "x-z". Pure nuclear
            transitions inside one sublevel manifold are labelled "x-x" etc.
    """

    frequency: float
    intensity: float
    lower_index: int
    upper_index: int
    pair: str

    def to_dict(self) -> Dict:
        return {
            "frequency_MHz": self.frequency,
            "intensity": self.intensity,
            "lower_index": self.lower_index,
            "upper_index": self.upper_index,
            "pair": self.pair,
        }


@dataclass(frozen=True)
class SpectrumConfig:
    """
    Line shape and sampling grid of a broadened spectrum.

    Attributes:
        fwhm (float): Full width at half maximum in MHz.
        grid (tuple): (f_min, f_max, n_points) in MHz.
        line_shape (str): "gaussian" or "lorentzian".
        transition_weights (dict, optional): Signed weight per sublevel pair
            ("x-y", "x-z", "y-z"); pairs not listed keep weight 1.
    """

    fwhm: float
    grid: Tuple[float, float, int]
    line_shape: str = "gaussian"
    transition_weights: Optional[Mapping[str, float]] = None

    def __post_init__(self):
        if self.line_shape not in LINE_SHAPES:
            raise ValueError(f"line_shape must be one of {LINE_SHAPES}")
        if not self.fwhm > 0:
            raise ValueError("fwhm must be positive")
        f_min, f_max, n_points = self.grid
        if not f_min < f_max:
            raise ValueError("grid requires f_min < f_max")
        if int(n_points) < 2:
            raise ValueError("grid requires at least two points")
        if self.transition_weights is not None:
            weights = {canonical_pair(k): float(v) for k, v in self.transition_weights.items()}
            object.__setattr__(self, "transition_weights", weights)

    def weight_for(self, pair: str) -> float:
        if not self.transition_weights:
            return 1.0
        return self.transition_weights.get(pair, 1.0)

    def frequencies(self) -> np.ndarray:
        f_min, f_max, n_points = self.grid
        return np.linspace(f_min, f_max, int(n_points))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Sampled spectrum: amplitude on a frequency grid (MHz)."""

    frequencies: np.ndarray
    amplitudes: np.ndarray


def spin_operators() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Returns the spin-1 matrices S_x, S_y, S_z in the Cartesian basis.

    Returns:
        tuple: Three complex 3x3 arrays with (S_k)_ab = -i eps_kab.
    """
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    return tuple(-1j * eps[k] for k in range(3))


def _embed(operator: np.ndarray, slot: int, n_spins: int) -> np.ndarray:
    factors = [np.eye(3)] * n_spins
    factors[slot] = operator
    return reduce(np.kron, factors)


def build_hamiltonian(system: SpinSystem) -> np.ndarray:
    """
    Builds H = D(S_z^2 - S^2/3) + E(S_x^2 - S_y^2)
             + sum_n sum_k (A_kk S_k I_k,n + Q_kk I_k,n^2).

    Args:
        system (SpinSystem): Triplet and nuclei.

    Returns:
        np.ndarray: Real symmetric matrix of dimension 3 * 3**N, MHz.
    """
    n_spins = 1 + len(system.nuclei)
    s_ops = spin_operators()
    dim = system.dimension

    h = np.zeros((dim, dim), dtype=complex)
    sx2, sy2, sz2 = (_embed(op @ op, 0, n_spins) for op in s_ops)
    h += system.zfs.D * (sz2 - (2.0 / 3.0) * np.eye(dim))
    h += system.zfs.E * (sx2 - sy2)

    electron_ops = [_embed(op, 0, n_spins) for op in s_ops]
    for slot, nucleus in enumerate(system.nuclei, start=1):
        for k, op in enumerate(s_ops):
            a_kk = nucleus.hyperfine.components[k]
            q_kk = nucleus.quadrupole.components[k]
            if a_kk:
                h += a_kk * (electron_ops[k] @ _embed(op, slot, n_spins))
            if q_kk:
                h += q_kk * _embed(op @ op, slot, n_spins)

    # products of two imaginary Cartesian generators are real
    assert not np.any(h.imag), "Cartesian-basis Hamiltonian must be real"
    return h.real.copy()


def diagonalize(hamiltonian: np.ndarray) -> EigenSolution:
    """
    Diagonalizes a Hermitian matrix.

    Args:
        hamiltonian (np.ndarray): Square Hermitian matrix.

    Returns:
        EigenSolution: Ascending energies and orthonormal eigenvectors.

    Raises:
        ValueError: If the matrix is not square or not Hermitian within
            1e-9 of its norm.
    """
    h = np.asarray(hamiltonian)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"Hamiltonian must be square, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise ValueError("Hamiltonian has non-finite entries")
    asymmetry = np.linalg.norm(h - h.conj().T)
    if asymmetry > HERMITICITY_TOLERANCE * np.linalg.norm(h):
        raise ValueError(f"Hamiltonian is not Hermitian (asymmetry {asymmetry:.3g})")
    energies, states = linalg.eigh(h)
    return EigenSolution(energies=energies, states=states)


def bare_levels(zfs: ZfsParams) -> Dict[str, float]:
    """Sublevel energies E_x = D/3 - E, E_y = D/3 + E, E_z = -2D/3 in MHz."""
    return {"x": zfs.D / 3.0 - zfs.E, "y": zfs.D / 3.0 + zfs.E, "z": -2.0 * zfs.D / 3.0}


def zero_field_transitions_analytic(zfs: ZfsParams) -> List[TransitionLine]:
    """
    Analytic transitions of the bare triplet.

    Sublevel energies are E_x = D/3 - E, E_y = D/3 + E, E_z = -2D/3, so the
    lines are x-y at 2|E|, x-z at D - E and y-z at D + E. Labels follow the
    signed E convention, not magnitude ordering.

    Returns:
        list of TransitionLine: x-y, x-z, y-z in that order, unit intensity.
    """
    level = bare_levels(zfs)
    lines = []
    for pair in TRANSITION_PAIRS:
        a, b = pair.split("-")
        lower, upper = sorted((a, b), key=lambda s: (level[s], SUBLEVELS.index(s)))
        frequency = {"x-y": 2.0 * abs(zfs.E), "x-z": zfs.D - zfs.E, "y-z": zfs.D + zfs.E}[pair]
        lines.append(
            TransitionLine(
                frequency=frequency,
                intensity=1.0,
                lower_index=SUBLEVELS.index(lower),
                upper_index=SUBLEVELS.index(upper),
                pair=pair,
            )
        )
    return lines


def sublevel_character(states: np.ndarray, n_nuclei: int) -> np.ndarray:
    """
    Electron-sublevel weights of each eigenvector.

    Returns:
        np.ndarray: Shape (n_states, 3); row i holds the x, y, z weights of
        state i summed over nuclear configurations.
    """
    n_states = states.shape[1]
    amplitudes = states.T.reshape(n_states, 3, 3 ** n_nuclei)
    return np.sum(np.abs(amplitudes) ** 2, axis=2)


def transition_lines(
    sol: EigenSolution,
    system: SpinSystem,
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD,
) -> List[TransitionLine]:
    """
    Stick spectrum for an unpolarized microwave drive.

    The intensity of line (i, j) is sum_k |<j|S_k|i>|^2 divided by the number
    of nuclear configurations (equal nuclear populations), so the summed
    intensity of all lines is 3 whatever the number of nuclei.

    Args:
        sol (EigenSolution): Result of diagonalize() for the same system.
        system (SpinSystem): The system the solution belongs to.
        prune_threshold (float): Lines below this fraction of the strongest
            line are dropped; 0 keeps every pair.

    Returns:
        list of TransitionLine: Sorted by (lower_index, upper_index).

    Raises:
        ValueError: If the solution does not match the system dimension.
    """
    dim = system.dimension
    if sol.states.shape != (dim, dim) or sol.energies.shape != (dim,):
        raise ValueError(
            f"Eigen-solution of shape {sol.states.shape} does not match system dimension {dim}"
        )
    n_nuclei = len(system.nuclei)
    states = sol.states
    intensity = np.zeros((dim, dim))
    for op in spin_operators():
        element = states.conj().T @ np.kron(op, np.eye(system.nuclear_dimension)) @ states
        intensity += np.abs(element) ** 2
    intensity /= system.nuclear_dimension

    labels = np.argmax(sublevel_character(states, n_nuclei), axis=1)
    upper, lower = np.tril_indices(dim, k=-1)
    order = np.lexsort((upper, lower))
    lower, upper = lower[order], upper[order]
    strengths = intensity[upper, lower]
    cutoff = prune_threshold * strengths.max() if strengths.size else 0.0

    lines = []
    for i, j, strength in zip(lower, upper, strengths):
        if strength < cutoff or strength == 0.0:
            continue
        pair = "-".join(sorted((SUBLEVELS[labels[i]], SUBLEVELS[labels[j]]), key=SUBLEVELS.index))
        lines.append(
            TransitionLine(
                frequency=float(sol.energies[j] - sol.energies[i]),
                intensity=float(strength),
                lower_index=int(i),
                upper_index=int(j),
                pair=pair,
            )
        )
    logger.debug("Kept %d of %d transitions", len(lines), len(strengths))
    return lines


def broaden_spectrum(lines: Sequence[TransitionLine], cfg: SpectrumConfig) -> Spectrum:
    """
    Convolves the stick spectrum with a unit-area line shape.

    amplitude(f) = sum over lines of weight * intensity * L(f - f_line), where
    the weight comes from cfg.transition_weights and may be negative.

    Args:
        lines (list of TransitionLine): Sticks; an empty list gives zeros.
        cfg (SpectrumConfig): Line shape, width, grid and weights.

    Returns:
        Spectrum: Frequencies and amplitudes on the configured grid.
    """
    freqs = cfg.frequencies()
    amplitudes = np.zeros_like(freqs)
    if not lines:
        return Spectrum(frequencies=freqs, amplitudes=amplitudes)

    if cfg.line_shape == "gaussian":
        shape = stats.norm(scale=cfg.fwhm / FWHM_PER_SIGMA)
    else:
        shape = stats.cauchy(scale=cfg.fwhm / 2.0)

    centres = np.array([line.frequency for line in lines])
    heights = np.array([cfg.weight_for(line.pair) * line.intensity for line in lines])
    amplitudes = heights @ shape.pdf(freqs[None, :] - centres[:, None])
    return Spectrum(frequencies=freqs, amplitudes=amplitudes)


def multiplet_centroids(
    system: SpinSystem, sol: Optional[EigenSolution] = None
) -> Dict[str, float]:
    """
    Intensity-weighted mean frequency of each electron-transition multiplet.

    For a pair (a, b) with bare levels E_a > E_b the multiplet is described by
    the pair-projected dipole operator O = |T_b><T_a| (x) 1_nuclear. Its
    strength |<m|O|n>|^2 between every pair of eigenstates weights the signed
    frequency E_n - E_m. Summed over all eigenstate pairs, unpruned, this
    first moment is tr(P_a H) - tr(P_b H) over the nuclear dimension; the
    hyperfine blocks have zero trace in the |T_k> basis and the quadrupole
    blocks cancel, so the centroid stays on the bare line at any hyperfine
    strength.

    Args:
        system (SpinSystem): Triplet and nuclei.
        sol (EigenSolution): Optional precomputed diagonalize() result.

    Returns:
        dict: Pair label -> centroid in MHz for every inter-sublevel pair.

    Raises:
        ValueError: If the solution does not match the system dimension.
    """
    if sol is None:
        sol = diagonalize(build_hamiltonian(system))
    dim = system.dimension
    if sol.states.shape != (dim, dim):
        raise ValueError(
            f"Eigen-solution of shape {sol.states.shape} does not match system dimension {dim}"
        )
    level = bare_levels(system.zfs)
    frequency = sol.energies[None, :] - sol.energies[:, None]
    nuclear_identity = np.eye(system.nuclear_dimension)

    centroids = {}
    for pair in TRANSITION_PAIRS:
        lower, upper = sorted(pair.split("-"), key=lambda s: (level[s], SUBLEVELS.index(s)))
        projector = np.zeros((3, 3))
        projector[SUBLEVELS.index(lower), SUBLEVELS.index(upper)] = 1.0
        element = sol.states.conj().T @ np.kron(projector, nuclear_identity) @ sol.states
        strength = np.abs(element) ** 2
        centroids[pair] = float(np.sum(strength * frequency) / np.sum(strength))
    return centroids


def quadrupole_frequencies(q: DiagonalTensor) -> Tuple[float, float, float]:
    """
    Pure quadrupole transition frequencies of an I=1 nucleus.

    Args:
        q (DiagonalTensor): Quadrupole tensor in MHz.

    Returns:
        tuple: (|Q_xx - Q_yy|, |Q_yy - Q_zz|, |Q_xx - Q_zz|) in MHz, labelled by
        QUADRUPOLE_LINE_LABELS.
    """
    return (abs(q.xx - q.yy), abs(q.yy - q.zz), abs(q.xx - q.zz))


def simulate_spectrum(
    system: SpinSystem,
    cfg: SpectrumConfig,
    prune_threshold: float = DEFAULT_PRUNE_THRESHOLD,
) -> Tuple[List[TransitionLine], Spectrum]:
    """
    Runs build_hamiltonian -> diagonalize -> transition_lines -> broaden_spectrum.

    Returns:
        tuple: (stick lines, broadened spectrum).
    """
    solution = diagonalize(build_hamiltonian(system))
    lines = transition_lines(solution, system, prune_threshold=prune_threshold)
    return lines, broaden_spectrum(lines, cfg)
