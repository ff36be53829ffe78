import csv
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import ujson

logger = logging.getLogger(__name__)


def to_jsonable(value: Any) -> Any:
    """
    Converts numpy containers and scalars to plain Python for ujson.

    Non-finite floats become the strings "inf", "-inf" or "nan".
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    return value


def format_cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


class ResultLogger:
    """
    Writes a command's CSV, JSON and plot files under one output directory.

    Every JSON document gets the same provenance block, and every file written
    is remembered so a command can report what it produced.

    Attributes:
        out_dir (Path): Root output directory.
        provenance (dict): Config digest, presets, tool name, version and seed.
        written (list): Paths written so far, in order.
    """

    def __init__(self, out_dir, provenance: Optional[Dict] = None):
        self.out_dir = Path(out_dir)
        self.provenance = dict(provenance or {})
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        target = self.out_dir / name
        target.parent.mkdir(parents=True, exist_ok=True)
        return target

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """
        Writes a CSV file (comma, header row, UTF-8, LF endings).

        Floats are written with repr() so reruns are byte-identical.
        """
        target = self.path(name)
        with open(target, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_cell(cell) for cell in row])
        self.written.append(target)
        logger.debug("Wrote %s", target)
        return target

    def write_json(self, name: str, payload: Dict, with_provenance: bool = True) -> Path:
        """Writes sorted, indented JSON, adding the provenance block."""
        document = dict(payload)
        if with_provenance:
            document["provenance"] = self.provenance
        target = self.path(name)
        with open(target, "w", encoding="utf-8", newline="\n") as f:
            f.write(dumps(document))
            f.write("\n")
        self.written.append(target)
        logger.debug("Wrote %s", target)
        return target

    def register(self, target: Path):
        """Records a file produced by another writer (plots)."""
        self.written.append(Path(target))


def dumps(payload: Any) -> str:
    return ujson.dumps(to_jsonable(payload), indent=2, sort_keys=True, escape_forward_slashes=False)
