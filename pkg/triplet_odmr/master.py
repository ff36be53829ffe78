"""
Command-line entry point of the toolkit.

Subcommands:
- spectrum:    zero-field ODMR spectrum of the configured spin system.
- simulate:    the 22 pulsed relaxation curves for the configured kinetics.
- fit:         global fit of the nine kinetic parameters to saved curves.
- eseem:       Hahn-echo envelope fit and modulation spectrum of a saved trace.
- sensitivity: ratio of two relative sensitivity figures.
- presets:     print the built-in kinetic presets.

Configuration errors exit with code 2 and numerical failures with code 3; in
both cases a JSON error object is printed on stderr and nothing is written.
"""

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.linalg import LinAlgError

from . import __version__
from .utils.config import LoadedConfig, ProjectConfig, load_config
from .utils.data_logger import ResultLogger, dumps
from .utils.data_reader import read_curves, read_echo_trace, read_sensitivity_inputs
from .utils.echo_analysis import EseemOptions, analyze_echo, predicted_quadrupole_lines
from .utils.errors import EXIT_CONFIG_ERROR, EXIT_NUMERICAL_ERROR, ConfigError, OdmrError
from .utils.global_fit import FitOptions, FitParameterSet, ModelContext, fit
from .utils.plotting import plot_curves, plot_echo, plot_spectrum
from .utils.presets import PRESETS, preset_names
from .utils.pulse_engine import SequenceRunner, generate_plan, kinetic_transition_weights
from .utils.sensitivity import compare_sensitivity
from .utils.spin_hamiltonian import (
    multiplet_centroids,
    simulate_spectrum,
    zero_field_transitions_analytic,
)

logger = logging.getLogger(__name__)

TOOL_NAME = "triplet_odmr"


# ---- Helpers ----
def provenance(loaded: Optional[LoadedConfig], args, presets: List[str]) -> dict:
    return {
        "config_sha256": loaded.sha256 if loaded else None,
        "presets": sorted(presets),
        "tool": TOOL_NAME,
        "version": __version__,
        "seed": args.seed,
    }


def output_dir(args, config: Optional[ProjectConfig]) -> Path:
    if args.out:
        return Path(args.out)
    return Path(config.paths.out_dir if config else "out")


def kinetics_from(config: ProjectConfig):
    section = config.require("kinetics")
    return section.to_kinetic(), section.to_optical(), section.preset_names()


# ---- Subcommands ----
def cmd_spectrum(loaded: LoadedConfig, args) -> int:
    """
    Simulates the zero-field spectrum and writes spectrum.csv, lines.json and spectrum.svg.
    """
    config = loaded.config
    system = config.require("spin_system").to_spin_system()
    section = config.require("spectrum")
    presets = []
    weights = None
    if section.weights_from_kinetics:
        kinetic, optical, presets = kinetics_from(config)
        weights = kinetic_transition_weights(
            kinetic, optical, config.plan.timing(), config.plan.readout_delay_s
        )
    spectrum_config = section.to_spectrum_config(weights)
    lines, spectrum = simulate_spectrum(system, spectrum_config, section.prune_threshold)
    print(f"Simulated {len(lines)} lines for {len(system.nuclei)} nuclei.")

    results = ResultLogger(output_dir(args, config), provenance(loaded, args, presets))
    results.write_csv(
        "spectrum.csv",
        ["frequency_MHz", "amplitude"],
        zip(spectrum.frequencies, spectrum.amplitudes),
    )
    results.write_json(
        "lines.json",
        {
            "spin_system": system.to_dict(),
            "lines": [line.to_dict() for line in lines],
            "centroids_MHz": multiplet_centroids(system),
            "analytic_MHz": {t.pair: t.frequency for t in zero_field_transitions_analytic(system.zfs)},
            "transition_weights": spectrum_config.transition_weights,
            "options": section.model_dump(),
        },
    )
    results.register(plot_spectrum(spectrum, lines, results.path("spectrum.svg")))
    return 0


async def simulate_curves(plan, runner: SequenceRunner, timing, threads: int):
    """
    Simulates every spec concurrently, at most `threads` at a time.

    Returns:
        list: SimulatedCurve objects in plan order.
    """
    semaphore = asyncio.Semaphore(threads)

    async def simulate_one(spec):
        async with semaphore:
            return await asyncio.to_thread(runner.curve, spec, timing)

    return await asyncio.gather(*(simulate_one(spec) for spec in plan))


def cmd_simulate(loaded: LoadedConfig, args) -> int:
    """
    Simulates the 22-measurement plan; writes curves/<key>.csv, curves/plan.json
    and curves.svg. Noise, if configured, is seeded per curve from --seed.
    """
    config = loaded.config
    kinetic, optical, presets = kinetics_from(config)
    timing = config.plan.timing()
    grid = config.plan.delay_grid(kinetic)
    plan = generate_plan(grid, config.plan.readout_delay_s)

    runner = SequenceRunner(kinetic, optical)
    runner.readout_weights(timing.readout_window)
    curves = asyncio.run(simulate_curves(plan, runner, timing, args.threads))

    sigma = config.plan.noise_sigma
    if sigma:
        streams = np.random.SeedSequence(args.seed).spawn(len(curves))
        curves = [c.with_noise(sigma, np.random.default_rng(s)) for c, s in zip(curves, streams)]
    print(f"Simulated {len(curves)} curves on {len(grid)} delays.")

    results = ResultLogger(output_dir(args, config), provenance(loaded, args, presets))
    entries = []
    for curve in curves:
        name = f"{curve.spec.key}.csv"
        if sigma:
            rows = zip(curve.delays, curve.signal, np.full(len(curve.delays), sigma))
            results.write_csv(f"curves/{name}", ["delay_s", "signal", "sigma"], rows)
        else:
            results.write_csv(f"curves/{name}", ["delay_s", "signal"], zip(curve.delays, curve.signal))
        entries.append({**curve.spec.to_dict(), "file": name})
    results.write_json(
        "curves/plan.json",
        {
            "curves": entries,
            "kinetics": {**kinetic.to_dict(), **optical.to_dict()},
            "plan": config.plan.model_dump(),
        },
    )
    results.register(plot_curves(curves, results.path("curves.svg")))
    return 0


def cmd_fit(loaded: LoadedConfig, args) -> int:
    """
    Globally fits saved curves; writes fit_result.json, fit/<key>.csv and fit.svg.
    """
    config = loaded.config
    section = config.require("kinetics")
    optical = section.to_optical()
    presets = section.preset_names()
    initial_rates = config.fit.initial or section
    initial = FitParameterSet(kinetic=initial_rates.to_kinetic())
    if config.fit.initial is not None and config.fit.initial.preset:
        presets.append(config.fit.initial.preset)

    curves_dir = args.curves or config.paths.curves_dir or output_dir(args, config) / "curves"
    subset = args.curves_subset or config.fit.curves_subset
    data = read_curves(curves_dir, subset)

    options = FitOptions(
        multi_start=config.fit.multi_start,
        seed=args.seed,
        perturbation=config.fit.perturbation,
        max_nfev=config.fit.max_nfev,
        ftol=config.fit.ftol,
        xtol=config.fit.xtol,
        rel_step=config.fit.rel_step,
        fit_pump_scale=config.fit.fit_pump_scale,
        per_curve_amplitude=config.fit.per_curve_amplitude,
        threads=args.threads,
    )
    context = ModelContext(optical=optical, timing=config.plan.timing())
    result = fit(data, initial, context, options)
    print(f"Fit finished: chi2 = {result.chi2:.6g}, dof = {result.dof}, converged = {result.converged}")

    results = ResultLogger(output_dir(args, config), provenance(loaded, args, presets))
    for curve, model, residual in zip(data, result.per_curve_model, result.per_curve_residuals):
        results.write_csv(
            f"fit/{curve.spec.key}.csv",
            ["delay_s", "data", "model", "residual"],
            zip(curve.delays, curve.signal, model, residual),
        )
    results.write_json(
        "fit_result.json",
        {
            **result.to_dict(),
            "curves": [curve.spec.key for curve in data],
            "curves_subset": subset,
            "options": config.fit.model_dump(exclude={"initial"}),
        },
    )
    results.register(plot_curves(data, results.path("fit.svg"), result.per_curve_model))
    return 0


def cmd_eseem(loaded: LoadedConfig, args) -> int:
    """
    Runs the echo pipeline on a saved trace; writes eseem_result.json,
    modulation.csv, eseem_spectrum.csv and eseem.svg.
    """
    config = loaded.config
    section = config.eseem
    trace_path = args.trace or config.paths.trace
    if not trace_path:
        raise ConfigError("No echo trace given (positional argument or paths.trace)")
    trace = read_echo_trace(trace_path, section.time_axis)

    if section.predicted_MHz is not None:
        predicted = {label: f * 1e6 for label, f in section.predicted_MHz.items()}
    elif config.spin_system is not None and config.spin_system.nuclei:
        system = config.spin_system.to_spin_system()
        predicted = predicted_quadrupole_lines(system.nuclei[0].quadrupole)
    else:
        predicted = {}
    options = EseemOptions(
        window=section.window,
        zero_pad_factor=section.zero_pad_factor,
        detrend=section.detrend,
        stretched=section.stretched,
        tolerance=section.tolerance_MHz * 1e6,
    )
    result = analyze_echo(trace, predicted, options)
    print(f"T2 = {result.t2 * 1e6:.4g} us, {len(result.peaks)} peak(s) found.")

    results = ResultLogger(output_dir(args, config), provenance(loaded, args, []))
    envelope = result.envelope.evaluate(trace.tau)
    results.write_csv(
        "modulation.csv",
        ["tau_s", "amplitude", "envelope", "residual"],
        zip(trace.tau, trace.amplitude, envelope, result.residual),
    )
    results.write_csv(
        "eseem_spectrum.csv",
        ["frequency_Hz", "magnitude"],
        zip(result.frequencies, result.spectrum),
    )
    results.write_json(
        "eseem_result.json",
        {
            "envelope": result.envelope.to_dict(),
            "peaks": [peak.to_dict() for peak in result.peaks],
            "predicted_Hz": predicted,
            "options": section.model_dump(),
        },
    )
    results.register(plot_echo(trace, result, results.path("eseem.svg")))
    return 0


def cmd_sensitivity(loaded: Optional[LoadedConfig], args) -> int:
    """Prints the b/a sensitivity ratio with its per-input breakdown."""
    config = loaded.config if loaded else None
    path_a = args.inputs[0] if args.inputs else (config.paths.sensitivity_a if config else None)
    path_b = args.inputs[1] if args.inputs else (config.paths.sensitivity_b if config else None)
    if not (path_a and path_b):
        raise ConfigError("Two sensitivity input files are required")
    a, b = read_sensitivity_inputs(path_a), read_sensitivity_inputs(path_b)
    comparison = compare_sensitivity(a, b)
    report = {"a": a.to_dict(), "b": b.to_dict(), **comparison.to_dict()}
    print(dumps(report))
    if args.out or config is not None:
        results = ResultLogger(output_dir(args, config), provenance(loaded, args, []))
        results.write_json("sensitivity.json", report)
    return 0


def cmd_presets(loaded: Optional[LoadedConfig], args) -> int:
    """Prints every built-in preset with its provenance note."""
    print(dumps({name: PRESETS[name].to_dict() for name in preset_names()}))
    return 0


COMMANDS = {
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "eseem": cmd_eseem,
    "sensitivity": cmd_sensitivity,
    "presets": cmd_presets,
}
CONFIG_OPTIONAL = {"sensitivity", "presets"}


# ---- Argument parsing ----
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="Zero-field triplet ODMR toolkit")
    parser.add_argument("--config", help="project config JSON")
    parser.add_argument("--out", help="output directory (overrides paths.out_dir)")
    parser.add_argument("--seed", type=int, default=0, help="seed for noise and fit restarts")
    parser.add_argument("--threads", type=int, default=1, help="worker threads")
    strictness = parser.add_mutually_exclusive_group()
    strictness.add_argument("--strict", dest="strict", action="store_true", default=True,
                            help="reject unknown config keys (default)")
    strictness.add_argument("--lenient", dest="strict", action="store_false",
                            help="drop unknown config keys with a warning")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", help="simulate the zero-field ODMR spectrum")
    sub.add_parser("simulate", help="simulate the 22 relaxation curves")
    fit_parser = sub.add_parser("fit", help="global fit of saved curves")
    fit_parser.add_argument("--curves", help="curve directory (default <out>/curves)")
    fit_parser.add_argument("--curves-subset", choices=["all", "A"], help="fit all curves or Sequence A only")
    eseem_parser = sub.add_parser("eseem", help="analyze a Hahn-echo trace")
    eseem_parser.add_argument("trace", nargs="?", help="echo CSV (time_us, amplitude)")
    sens_parser = sub.add_parser("sensitivity", help="compare two sensitivity inputs")
    sens_parser.add_argument("inputs", nargs="*", help="two SensitivityInputs JSON files")
    sub.add_parser("presets", help="print the built-in presets")
    return parser


def report_error(exc: Exception, exit_code: int) -> int:
    sys.stderr.write(
        dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": exit_code}) + "\n"
    )
    return exit_code


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parses arguments, loads the config and runs one subcommand.

    Returns:
        int: Process exit code (0, 2 for config errors, 3 for numerical errors).
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.command == "sensitivity" and args.inputs and len(args.inputs) != 2:
            raise ConfigError("sensitivity takes exactly two input files")
        loaded = None
        if args.config:
            loaded = load_config(args.config, strict=args.strict)
        elif args.command not in CONFIG_OPTIONAL:
            raise ConfigError(f"--config is required for {args.command}")
        logger.info("Running %s (config %s)", args.command, args.config or "none")
        code = COMMANDS[args.command](loaded, args)
        logger.info("Finished %s with exit code %d", args.command, code)
        return code
    except OdmrError as exc:
        return report_error(exc, exc.exit_code)
    except (LinAlgError, FloatingPointError) as exc:
        return report_error(exc, EXIT_NUMERICAL_ERROR)
    except ValueError as exc:
        return report_error(exc, EXIT_CONFIG_ERROR)


if __name__ == "__main__":
    sys.exit(main())
