"""Helpers shared by the subcommands: request loading, input records, output writing"""

import argparse
from pathlib import Path
from typing import Any, Dict, Iterable, Type, TypeVar

import pandas as pd
from pydantic import BaseModel

from ifkernel.core.io import read_json, read_two_column_csv, write_frame_csv, write_json
from ifkernel.schemas.signal import SampledSignal

RequestT = TypeVar("RequestT", bound=BaseModel)


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON file with the request fields; flags override it")
    parser.add_argument("--output", "-o", type=Path, help="output file (CSV or JSON)")
    parser.add_argument("--seed", type=int, help="random seed for stochastic steps")
    parser.add_argument("--format", dest="output_format", choices=["csv", "json"], help="output format")


def load_request(model: Type[RequestT], args: argparse.Namespace, fields: Iterable[str]) -> RequestT:
    """Merge the --config JSON with explicitly given flags and validate the result."""
    payload: Dict[str, Any] = read_json(args.config) if getattr(args, "config", None) else {}
    for name in ("output", "seed", "output_format", *fields):
        value = getattr(args, name, None)
        if value is not None and value is not False:
            payload[name] = value
    return model.model_validate(payload)


def read_signal(path: Path) -> tuple:
    """Read (t, y) and place the samples on the normalized grid t_j = j/N.

    Returns the normalized signal and the original time column.
    """
    frame = read_two_column_csv(path)
    original = frame["t"].to_numpy()
    SampledSignal(times=original, values=frame["y"].to_numpy())
    return SampledSignal.on_unit_grid(frame["y"].to_numpy()), original


def write_table(frame: pd.DataFrame, path: Path, output_format: str) -> Path:
    if output_format == "json":
        return write_json({"rows": frame.to_dict(orient="list")}, path)
    return write_frame_csv(frame, path)


def parse_pair(text: str) -> tuple:
    """'a,b' → (a, b) as floats."""
    parts = [float(part) for part in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return tuple(parts)


def parse_list(text: str) -> list:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
