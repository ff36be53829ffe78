import numpy as np
import pytest

from triplet_odmr.utils.kinetics import KineticParams, OpticalParams
from triplet_odmr.utils.presets import get_preset
from triplet_odmr.utils.spin_hamiltonian import SpinSystem

DAP_A = (-0.79, -0.99, 23.0)
DAP_Q = (0.99, -2.2, 1.2)


def dap_system_dict(nuclei=2, hyperfine_scale=1.0):
    nucleus = {"A_MHz": [hyperfine_scale * a for a in DAP_A], "Q_MHz": list(DAP_Q)}
    return {"D_MHz": 1390.5, "E_MHz": -84.9, "nuclei": [nucleus] * nuclei}


def rk4(R, x0, t, dt=1e-9):
    """
    Classic fourth-order Runge-Kutta for dx/dt = R x, batched over leading axes.

    Args:
        R (np.ndarray): (..., n, n) generators.
        x0 (np.ndarray): (..., n) initial populations.
        t (float): Final time in seconds.
        dt (float): Nominal step; the last step is shortened to land on t.
    """
    n_steps = max(1, int(np.ceil(t / dt)))
    h = t / n_steps
    x = np.array(x0, dtype=float)

    def f(y):
        return np.einsum("...ij,...j->...i", R, y)

    for _ in range(n_steps):
        k1 = f(x)
        k2 = f(x + 0.5 * h * k1)
        k3 = f(x + 0.5 * h * k2)
        k4 = f(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


@pytest.fixture
def bare_triplet():
    return SpinSystem.from_dict(dap_system_dict(nuclei=0))


@pytest.fixture
def dap_system():
    return SpinSystem.from_dict(dap_system_dict(nuclei=2))


@pytest.fixture
def dap():
    return get_preset("DAP-fig4c")


@pytest.fixture
def pc():
    return get_preset("Pc-fig4c")


@pytest.fixture
def equal_k():
    return KineticParams(5e4, 5e4, 5e4, 1.0e4, 3.0e4, 2.0e4, 0.5, 0.3, 0.2)


@pytest.fixture
def optical():
    return OpticalParams.for_pump_fraction(0.3, 1e-6)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
