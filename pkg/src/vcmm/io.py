"""File formats for the command-line tools.

Formats are deliberately small and stable:

* ``y.csv``      -- single numeric column, no header.
* ``X.csv``      -- numeric matrix with a header row of column names.
* ``Z.csv``      -- same, holding all random-effect columns side by side.
* ``blocks.json``-- ``{"blocks": [{"name": str, "cols": [start, end)}]}``
  mapping half-open, 0-based column ranges of ``Z.csv`` to named blocks.
* result JSON    -- versioned with ``"schema": 1``; readers ignore
  unknown fields so future versions can add keys.

All floating-point output is serialized with 17 significant digits so
files round-trip bit-exactly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import ProblemData

SCHEMA_VERSION = 1


class InputError(ValueError):
    """Malformed or missing input file; message carries the diagnostic."""


def format_float(x: float) -> str:
    """17-significant-digit decimal form that round-trips the double."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# CSV reading


def _parse_cell(text: str, path, row: int, col: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(
            f"{path}: non-numeric value {text!r} at row {row}, column {col}"
        ) from None


def read_vector_csv(path) -> np.ndarray:
    """Single numeric column, no header."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    values = []
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 1:
                raise InputError(
                    f"{path}: expected 1 column, found {len(row)} at row {r}"
                )
            values.append(_parse_cell(row[0], path, r, 1))
    if not values:
        raise InputError(f"{path}: file is empty")
    return np.asarray(values, dtype=float)


def read_matrix_csv(path) -> tuple[list[str], np.ndarray]:
    """Numeric matrix with a header row; returns (names, values)."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        ncol = len(header)
        rows = []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ncol:
                raise InputError(
                    f"{path}: expected {ncol} columns, found {len(row)} at row {r}"
                )
            rows.append([_parse_cell(cell, path, r, c + 1) for c, cell in enumerate(row)])
    if not rows:
        raise InputError(f"{path}: no data rows")
    return header, np.asarray(rows, dtype=float)


def read_blocks(path, n_z_cols: int) -> list[tuple[str, int, int]]:
    """Block definitions as (name, start, end) over the Z columns."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise InputError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(doc, dict) or "blocks" not in doc:
        raise InputError(f"{path}: expected an object with a 'blocks' list")
    blocks = []
    for k, entry in enumerate(doc["blocks"]):
        try:
            name = str(entry["name"])
            start, end = (int(v) for v in entry["cols"])
        except (KeyError, TypeError, ValueError):
            raise InputError(
                f"{path}: blocks[{k}] must have 'name' and 'cols': [start, end)"
            ) from None
        if not (0 <= start < end <= n_z_cols):
            raise InputError(
                f"{path}: blocks[{k}] range [{start}, {end}) is invalid for "
                f"{n_z_cols} Z columns"
            )
        blocks.append((name, start, end))
    if not blocks:
        raise InputError(f"{path}: 'blocks' list is empty")
    return blocks


def load_problem(y_path, x_path, z_path, blocks_path) -> tuple[ProblemData, list[str]]:
    """Assemble a problem from the four input files."""
    y = read_vector_csv(y_path)
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise InputError(f"{y_path}: responses must be 0 or 1")
    _, X = read_matrix_csv(x_path)
    _, Z = read_matrix_csv(z_path)
    if X.shape[0] != y.size or Z.shape[0] != y.size:
        raise InputError(
            f"row mismatch: y has {y.size} rows, X has {X.shape[0]}, Z has {Z.shape[0]}"
        )
    blocks = read_blocks(blocks_path, Z.shape[1])
    Zblocks = tuple(Z[:, start:end] for _, start, end in blocks)
    names = [name for name, _, _ in blocks]
    return ProblemData(y=y, X=X, Zblocks=Zblocks), names


# ---------------------------------------------------------------------------
# Writing


def write_vector_csv(path, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        for v in np.asarray(values, dtype=float).ravel():
            fh.write(format_float(v) + "\n")


def write_matrix_csv(path, names: Sequence[str], values: np.ndarray) -> None:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if len(names) != values.shape[1]:
        raise ValueError("header length does not match column count")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in values:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def write_blocks(path, blocks: Sequence[tuple[str, int, int]]) -> None:
    doc = {
        "blocks": [
            {"name": name, "cols": [int(start), int(end)]}
            for name, start, end in blocks
        ]
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _serialize(obj, indent: str, level: int) -> str:
    pad = indent * (level + 1)
    close = indent * level
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = (
            f"{pad}{json.dumps(str(k))}: {_serialize(v, indent, level + 1)}"
            for k, v in obj.items()
        )
        return "{\n" + ",\n".join(items) + f"\n{close}}}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        items = (f"{pad}{_serialize(v, indent, level + 1)}" for v in seq)
        return "[\n" + ",\n".join(items) + f"\n{close}]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format_float(x) if np.isfinite(x) else json.dumps(x)
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dump_json(path, obj: dict) -> None:
    """JSON with floats at 17 significant digits."""
    with open(path, "w") as fh:
        fh.write(_serialize(obj, "  ", 0))
        fh.write("\n")


def read_json(path) -> dict:
    """Read a result/metadata JSON document; unknown fields are kept as-is
    so newer schema versions remain readable."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"input file not found: {path}")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise InputError(f"{path}: invalid JSON ({err})") from None
