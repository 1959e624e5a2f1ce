"""CSV and JSON artifacts.

Kernel dumps are CSV matrices preceded by one ``# {json}`` comment line with
the grid metadata.  Every float is written with 17 significant digits so a
dump round-trips bit for bit; files use LF line endings.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .grid import Grid
from .operators import KernelOperator

FLOAT_FMT = "%.17g"


def _fmt_row(row) -> str:
    return ",".join(FLOAT_FMT % v for v in row)


def write_kernel_csv(path, K: KernelOperator, role: str | None = None) -> Path:
    path = Path(path)
    header = {**K.grid.metadata(), "nodes": [float(x) for x in K.grid.nodes],
              "weights": [float(x) for x in K.grid.weights]}
    if role is not None:
        header["role"] = role
    lines = ["# " + json.dumps(header, sort_keys=True)]
    lines += [_fmt_row(r) for r in K.values]
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


def read_kernel_csv(path) -> tuple[KernelOperator, dict]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# "):
        raise InvalidArgumentError(f"{path}: missing JSON header line")
    header = json.loads(text[0][2:])
    grid = Grid(header["L"], header["nodes"], header["weights"], header["scheme"])
    values = np.array([[float(v) for v in line.split(",")] for line in text[1:] if line])
    return KernelOperator(grid, values.reshape(grid.n, grid.n)), header


def write_columns_csv(path, columns: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], float) for k in names])
    lines = [",".join(names)] + [_fmt_row(r) for r in data]
    path.write_text("\n".join(lines) + "\n", newline="\n")
    return path


def read_columns_csv(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    names = lines[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:] if line])
    return {k: data[:, i] for i, k in enumerate(names)}


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n", newline="\n")
    return path
