"""Reading input data and writing the reports of the command line interface.

Every JSON report starts with a reproducibility header holding the package version, the
command, its fully resolved arguments and the seed. Reports are written with sorted keys
so the same command with the same seed yields byte-identical files.
"""
from __future__ import annotations

import json
import re
from enum import Enum
from pathlib import Path
from typing import Any
from typing import Dict
from typing import Optional
from typing import Union

import numpy as np
import pandas as pd

from . import __version__
from .exceptions import DataFormatError
from .log import internal_logger
from .series_fit import Dataset

PathLike = Union[str, Path]

# first line of the file holds the header, pandas counts data rows from zero
_HEADER_OFFSET = 2
_PARSER_LINE = re.compile(r"line (\d+)")


def _read_csv(path: PathLike, **kwargs: Any) -> pd.DataFrame:
    try:
        return pd.read_csv(path, encoding="utf-8", **kwargs)
    except pd.errors.EmptyDataError:
        raise DataFormatError(f"File {path} is empty")
    except pd.errors.ParserError as e:
        match = _PARSER_LINE.search(str(e))
        raise DataFormatError(
            f"Could not parse {path}", row=int(match.group(1)) if match else None
        ) from e
    except UnicodeDecodeError as e:
        raise DataFormatError(f"File {path} is not UTF-8 encoded") from e


def _numeric_column(frame: pd.DataFrame, name: str, path: PathLike) -> np.ndarray:
    if name not in frame.columns:
        raise DataFormatError(
            f"Column {name!r} not found in {path}, available: {', '.join(frame.columns)}"
        )
    values = pd.to_numeric(frame[name], errors="coerce")
    invalid = ~np.isfinite(values.to_numpy(dtype=float))
    if invalid.any():
        row = int(np.flatnonzero(invalid)[0])
        raise DataFormatError(
            f"Non-numeric or missing value {frame[name].iloc[row]!r} in column {name!r}",
            row=row + _HEADER_OFFSET,
        )
    return values.to_numpy(dtype=float)


def load_dataset(
    path: PathLike, y: str = "y", x: str = "x", w: Optional[str] = None
) -> Dataset:
    """Reads a CSV file with a header row and maps its columns by name.

    :param path: Location of the file
    :param y: Name of the outcome column
    :param x: Name of the regressor column
    :param w: Name of the column entering linearly, only for the partially linear model
    :raises DataFormatError: Citing the line of the file that could not be used.
    """
    frame = _read_csv(path, dtype=str, skipinitialspace=True)
    columns = {
        "y": _numeric_column(frame, y, path),
        "x": _numeric_column(frame, x, path),
    }
    if w is not None:
        columns["w"] = _numeric_column(frame, w, path)
    internal_logger.debug("Read %d observations from %s", len(frame), path)
    return Dataset(**columns)


def load_matrix(path: PathLike) -> np.ndarray:
    """Reads a square matrix from a CSV file without header, as passed to
    ``critvals --sigma``.

    :raises DataFormatError: If an entry is not numeric or the matrix not square.
    """
    frame = _read_csv(path, header=None, dtype=str, skipinitialspace=True)
    values = frame.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)
    invalid = np.flatnonzero(~np.isfinite(values).all(axis=1))
    if invalid.size:
        raise DataFormatError(f"Non-numeric entry in {path}", row=int(invalid[0]) + 1)
    if values.shape[0] != values.shape[1]:
        raise DataFormatError(f"Matrix in {path} has shape {values.shape}, not square")
    return values


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def report_header(command: str, arguments: Dict[str, Any], seed: int) -> Dict[str, Any]:
    return {
        "version": __version__,
        "command": command,
        "config": arguments,
        "seed": seed,
    }


def write_json(
    path: PathLike, payload: Dict[str, Any], header: Dict[str, Any]
) -> Path:
    """Writes ``payload`` below the reproducibility ``header``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    content = json.dumps(
        {"header": header, **payload}, indent=2, sort_keys=True, default=_to_builtin
    )
    path.write_text(content + "\n", encoding="utf-8")
    internal_logger.info("Wrote %s", path)
    return path


def write_frame(
    path: PathLike, frame: pd.DataFrame, header: Optional[Dict[str, Any]] = None
) -> Path:
    """Writes ``frame`` as CSV. With a ``header`` the reproducibility header goes to a
    sidecar ``<name>.meta.json`` next to it.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.10g")
    internal_logger.info("Wrote %s", path)
    if header is not None:
        write_json(sidecar_path(path), {"data_file": path.name}, header)
    return path


def sidecar_path(path: PathLike) -> Path:
    """
    >>> sidecar_path("out/band.csv").name
    'band.meta.json'
    """
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")
