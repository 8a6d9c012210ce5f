"""
Machine-readable output: run manifests, JSON documents and CSV tables.

Every JSON document carries its manifest under ``"manifest"``; every CSV
file starts with a ``# manifest=<json>`` line followed by the header row.
Floats in CSV are written with 17 significant digits.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field, is_dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO

import numpy as np

from . import __version__
from .config import get_config
from .errors import ConfigurationError

MANIFEST_PREFIX = "# manifest="
COMMENT_PREFIX = "# "

CURVE_COLUMNS = ("param", "mu", "sigma2", "b", "branch", "excluded")
SAMPLE_COLUMNS = ("path", "value", "events")
FIT_COLUMNS = ("mu", "sigma2")


@dataclass
class RunManifest:
    command: str
    params: Dict[str, Any]
    argv: List[str]
    seed: Optional[int] = None
    version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))
    schema_version: int = field(default_factory=lambda: get_config().output.csv_schema_version)

    def to_dict(self) -> Dict[str, Any]:
        return to_jsonable(asdict(self))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunManifest':
        try:
            return cls(
                command=data["command"],
                params=dict(data.get("params", {})),
                argv=list(data["argv"]),
                seed=data.get("seed"),
                version=data.get("version", __version__),
                timestamp=data.get("timestamp", ""),
                schema_version=int(data.get("schema_version", 1)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"malformed manifest: {e}")

    @classmethod
    def load(cls, path: str) -> 'RunManifest':
        """Manifest from a JSON document or from the first line of a CSV file."""
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read manifest source {path}: {e}")

        first = text.lstrip().splitlines()[0] if text.strip() else ""
        try:
            if first.startswith(MANIFEST_PREFIX):
                return cls.from_dict(json.loads(first[len(MANIFEST_PREFIX):]))
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path} holds no readable manifest: {e}")
        if isinstance(doc, dict) and "manifest" in doc:
            doc = doc["manifest"]
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{path} holds no manifest object")
        return cls.from_dict(doc)


def to_jsonable(value: Any) -> Any:
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(value, Enum):
        return value.value
    if is_dataclass(value) and not isinstance(value, type):
        return to_jsonable(asdict(value))
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(payload: Dict[str, Any], manifest: RunManifest, stream: TextIO, indent: Optional[int] = 2) -> None:
    doc = {"manifest": manifest.to_dict()}
    doc.update(to_jsonable(payload))
    json.dump(doc, stream, indent=indent, allow_nan=False)
    stream.write("\n")


def format_value(value: Any) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        digits = get_config().output.float_digits
        value = float(value)
        return f"{value:.{digits}g}" if math.isfinite(value) else ("nan" if math.isnan(value) else repr(value))
    return str(value)


def write_csv(
    stream: TextIO,
    manifest: RunManifest,
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
    comments: Sequence[str] = (),
) -> None:
    stream.write(MANIFEST_PREFIX + json.dumps(manifest.to_dict(), separators=(",", ":")) + "\n")
    for line in comments:
        stream.write(COMMENT_PREFIX + line + "\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])


def read_csv_columns(path: str, columns: Sequence[str]) -> Dict[str, np.ndarray]:
    """Named float columns of a CSV file; ``#`` lines are skipped."""
    try:
        with open(path, newline="", encoding="utf-8") as f:
            lines = [line for line in f if line.strip() and not line.startswith("#")]
    except OSError as e:
        raise ConfigurationError(f"cannot read {path}: {e}")

    reader = csv.DictReader(lines)
    missing = [c for c in columns if c not in (reader.fieldnames or [])]
    if missing:
        raise ConfigurationError(f"{path} lacks column(s) {', '.join(missing)}; header must include {', '.join(columns)}")
    data: Dict[str, List[float]] = {c: [] for c in columns}
    for lineno, row in enumerate(reader, start=2):
        try:
            for c in columns:
                data[c].append(float(row[c]))
        except (TypeError, ValueError):
            raise ConfigurationError(f"{path}: row {lineno} has a non-numeric value")
    return {c: np.asarray(v, dtype=float) for c, v in data.items()}
