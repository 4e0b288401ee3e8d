"""CSV and JSON input/output with atomic writes"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

from ifkernel.core.config import settings
from ifkernel.core.errors import ConfigError

PathLike = Union[str, Path]


def read_two_column_csv(path: PathLike, columns=("t", "y")) -> pd.DataFrame:
    """Read a header-row CSV and return the requested columns as float64."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}", field="input")
    frame = pd.read_csv(path)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise ConfigError(f"missing columns {missing} in {path}", field="input")
    return frame[list(columns)].astype(float)


def _atomic_write(path: Path, payload: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def write_frame_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    payload = frame.to_csv(index=False, lineterminator="\n", float_format=settings.CSV_FLOAT_FORMAT)
    _atomic_write(path, payload)
    return path


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [_to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, float)):
        return float(value) if np.isfinite(value) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    return value


def write_json(payload: Dict[str, Any], path: PathLike) -> Path:
    """Write a JSON report stamped with the report schema version."""
    path = Path(path)
    document = {"schema_version": settings.REPORT_SCHEMA_VERSION, **_to_jsonable(payload)}
    _atomic_write(path, json.dumps(document, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", field="config")
    try:
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}", field="config") from exc
