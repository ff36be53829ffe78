"""
Ingestion of saved datasets: measurement curves, echo traces and
sensitivity inputs. Every problem with a file is reported as a ConfigError so
the command line exits with code 2 before computing anything.
"""

import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import ujson

from .echo_analysis import TIME_AXES, EchoTrace
from .errors import ConfigError
from .global_fit import MeasurementCurve
from .pulse_engine import MeasurementSpec
from .sensitivity import SensitivityInputs

logger = logging.getLogger(__name__)

PLAN_FILE = "plan.json"
CURVE_COLUMNS = ("delay_s", "signal")
TRACE_COLUMNS = ("time_us", "amplitude")


def read_json(path) -> Dict:
    """Parses a JSON file with ujson, raising ConfigError on any failure."""
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            return ujson.loads(f.read())
    except FileNotFoundError:
        raise ConfigError(f"File not found: {path}") from None
    except (OSError, ValueError) as exc:
        raise ConfigError(f"Cannot parse {path}: {exc}") from exc


def read_columns(path, required: Sequence[str], optional: Sequence[str] = ()) -> Dict[str, np.ndarray]:
    """
    Reads numeric CSV columns by header name.

    Args:
        path: CSV file with a header row.
        required: Columns that must be present.
        optional: Columns returned only when present.

    Returns:
        dict: Column name -> float array.
    """
    path = Path(path)
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise ConfigError(f"{path}: missing column(s) {', '.join(missing)}")
            wanted = list(required) + [c for c in optional if c in header]
            values = {c: [] for c in wanted}
            for line, row in enumerate(reader, start=2):
                try:
                    for c in wanted:
                        values[c].append(float(row[c]))
                except (TypeError, ValueError):
                    raise ConfigError(f"{path}:{line}: non-numeric value") from None
    except FileNotFoundError:
        raise ConfigError(f"File not found: {path}") from None
    except OSError as exc:
        raise ConfigError(f"Cannot read {path}: {exc}") from exc
    return {c: np.asarray(v) for c, v in values.items()}


def read_curves(directory, subset: str = "all") -> List[MeasurementCurve]:
    """
    Loads the curves listed in <directory>/plan.json.

    Args:
        directory: Folder written by the simulate command (or laid out alike).
        subset (str): "all", or "A" for the Sequence A curves only.

    Returns:
        list of MeasurementCurve: In plan order.

    Raises:
        ConfigError: Missing plan, missing curve files (all listed), or bad data.
    """
    directory = Path(directory)
    plan = read_json(directory / PLAN_FILE)
    entries = plan.get("curves")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{directory / PLAN_FILE} lists no curves")
    if subset == "A":
        entries = [e for e in entries if e.get("sequence_kind") == "A"]
    elif subset != "all":
        raise ConfigError(f"Unknown curve subset {subset!r}")

    absent = [e.get("file", "<unnamed>") for e in entries if not (directory / e.get("file", "")).is_file()]
    if absent:
        raise ConfigError(f"Missing curve files in {directory}: {', '.join(absent)}")

    curves = []
    for entry in entries:
        columns = read_columns(directory / entry["file"], CURVE_COLUMNS, optional=("sigma",))
        try:
            spec = MeasurementSpec.from_dict(entry, delay_grid=columns["delay_s"])
            curves.append(
                MeasurementCurve(spec, columns["delay_s"], columns["signal"], columns.get("sigma"))
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{entry['file']}: {exc}") from exc
    logger.info("Loaded %d curves from %s", len(curves), directory)
    return curves


def read_echo_trace(path, time_axis: Optional[str] = None) -> EchoTrace:
    """
    Loads an echo trace CSV (time_us, amplitude).

    The time axis comes from the JSON sidecar next to the CSV
    ({"time_axis": "tau" | "total_time"}); `time_axis` is used when no sidecar
    exists. One of the two is required.
    """
    path = Path(path)
    sidecar = path.with_suffix(".json")
    if sidecar.is_file():
        time_axis = read_json(sidecar).get("time_axis", time_axis)
    if time_axis not in TIME_AXES:
        raise ConfigError(
            f"Declare the time axis of {path} ('tau' or 'total_time') in {sidecar.name} or eseem.time_axis"
        )
    columns = read_columns(path, TRACE_COLUMNS)
    try:
        return EchoTrace.from_time_axis(columns["time_us"] * 1e-6, columns["amplitude"], time_axis)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def read_sensitivity_inputs(path) -> SensitivityInputs:
    payload = read_json(path)
    try:
        return SensitivityInputs.from_dict(payload)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid sensitivity inputs ({exc})") from exc
