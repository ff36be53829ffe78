import numpy as np

from triplet_odmr.utils.echo_analysis import analyze_echo, predicted_quadrupole_lines, synthesize_echo_trace
from triplet_odmr.utils.kinetics import Transition
from triplet_odmr.utils.presets import get_preset
from triplet_odmr.utils.pulse_engine import optimize_readout_delay
from triplet_odmr.utils.spin_hamiltonian import SpectrumConfig, SpinSystem, multiplet_centroids, simulate_spectrum

# ---- DAP spin system (two equivalent 14N) ----
dap = SpinSystem.from_dict({
    "D_MHz": 1390.5,
    "E_MHz": -84.9,
    "nuclei": [{"A_MHz": [-0.79, -0.99, 23.0], "Q_MHz": [0.99, -2.2, 1.2]}] * 2,
})

# ---- Spectrum ----
def quick_spectrum():
    lines, spectrum = simulate_spectrum(dap, SpectrumConfig(fwhm=5.0, grid=(0.0, 1600.0, 3201)))
    print(f"{len(lines)} lines, total intensity {sum(l.intensity for l in lines):.6f}")
    for pair, centroid in multiplet_centroids(dap).items():
        print(f"  {pair}: centroid {centroid:.2f} MHz")
    print(f"  strongest bin at {spectrum.frequencies[np.argmax(spectrum.amplitudes)]:.1f} MHz")


# ---- Pulsed contrast ----
def quick_contrast():
    for name in ("Pc-fig4c", "DAP-fig4c"):
        preset = get_preset(name)
        delay, value = optimize_readout_delay(preset.kinetic, preset.optical, Transition.XZ)
        print(f"{name}: x-z contrast {value:+.4f} at readout delay {delay * 1e6:.2f} us")


# ---- Echo ----
def quick_echo():
    tau = np.linspace(0.0, 5e-6, 256)
    trace = synthesize_echo_trace(tau, 1.71e-6, modulation=[(0.1, 3.19e6)], noise=0.002, seed=1)
    result = analyze_echo(trace, predicted_quadrupole_lines(dap.nuclei[0].quadrupole))
    print(f"T2 = {result.t2 * 1e6:.3f} us")
    for peak in result.peaks:
        print(f"  peak {peak.frequency / 1e6:.2f} MHz -> {peak.assignment}")


quick_spectrum()
quick_contrast()
quick_echo()
