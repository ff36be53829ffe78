"""
SVG plot files. Plots are a convenience next to the CSV/JSON outputs, drawn
with the Agg backend and written without timestamps so reruns are identical.
"""

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "triplet-odmr"
matplotlib.rcParams["svg.fonttype"] = "none"


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_spectrum(spectrum, lines, path) -> Path:
    """Broadened spectrum with the stick lines underneath."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(spectrum.frequencies, spectrum.amplitudes, color="black", lw=1)
    if lines:
        peak = np.max(np.abs(spectrum.amplitudes)) or 1.0
        top = max(line.intensity for line in lines) or 1.0
        ax.vlines(
            [line.frequency for line in lines],
            0,
            [-0.2 * peak * line.intensity / top for line in lines],
            color="tab:blue",
            lw=0.8,
        )
    ax.set_xlabel("Frequency (MHz)")
    ax.set_ylabel("ODMR amplitude (arb.)")
    return _save(fig, path)


def plot_curves(curves: Sequence, path, models: Sequence = None) -> Path:
    """Normalized signal against delay for every curve; fitted models as lines."""
    fig, ax = plt.subplots(figsize=(7, 5))
    for index, curve in enumerate(curves):
        color = plt.cm.viridis(index / max(len(curves) - 1, 1))
        delays_us = np.asarray(curve.delays) * 1e6
        ax.plot(delays_us, curve.signal, "o", ms=2, color=color, label=curve.spec.key)
        if models is not None:
            ax.plot(delays_us, models[index], "-", lw=0.8, color=color)
    ax.set_xscale("log")
    ax.set_xlabel("Delay (us)")
    ax.set_ylabel("Normalized PL")
    ax.legend(fontsize=5, ncol=2)
    return _save(fig, path)


def plot_echo(trace, result, path) -> Path:
    """Echo with envelope, residual modulation, and its spectrum."""
    fig, (top, middle, bottom) = plt.subplots(3, 1, figsize=(6, 7))
    tau_us = trace.tau * 1e6
    top.plot(tau_us, trace.amplitude, ".", ms=3, color="black")
    top.plot(tau_us, result.envelope.evaluate(trace.tau), color="tab:red")
    top.set_xlabel("tau (us)")
    top.set_ylabel("Echo")
    middle.plot(tau_us, result.residual, color="black", lw=0.8)
    middle.set_xlabel("tau (us)")
    middle.set_ylabel("Residual")
    bottom.plot(result.frequencies * 1e-6, result.spectrum, color="black", lw=0.8)
    for peak in result.peaks:
        bottom.axvline(peak.frequency * 1e-6, color="tab:blue", lw=0.5, ls="--")
    bottom.set_xlabel("Frequency (MHz)")
    bottom.set_ylabel("|FFT|")
    return _save(fig, path)
