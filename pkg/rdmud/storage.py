"""
Matrix and Result Storage
RDMUD-MAT v1 text files for matrices and vectors, a keyed matrix store for
expensive searches, and the sweep CSV writer.
"""

import csv
import json
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional, TextIO, Union

import numpy as np

from .error_handling import MatrixParseError
from .logging_config import get_simulation_logger

MAGIC = "RDMUD-MAT"
VERSION = "v1"

CSV_COLUMNS = (
    "sweep_var", "sweep_value", "detector", "N", "M", "K", "sigma2", "gram",
    "matrix_kind", "mu", "trials", "support_errors", "joint_errors", "pe",
    "ci_halfwidth", "cond_symbol_err", "master_seed",
)

PathLike = Union[str, Path]


# ============================================================================
# RDMUD-MAT
# ============================================================================

def _format_entry(value, is_complex: bool) -> str:
    if is_complex:
        return f"{value.real:.17g},{value.imag:.17g}"
    return f"{value:.17g}"


def write_matrix(path: PathLike, values: np.ndarray) -> Path:
    """Write a matrix (or a vector as one column) in RDMUD-MAT v1 format."""
    array = np.asarray(values)
    if array.ndim == 1:
        array = array[:, None]
    is_complex = np.iscomplexobj(array)
    rows, cols = array.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{MAGIC} {VERSION} {rows} {cols} {'complex' if is_complex else 'real'}\n")
        for row in array:
            f.write(" ".join(_format_entry(v, is_complex) for v in row) + "\n")
    return path


def _parse_header(path: str, line: str):
    fields = line.split()
    if len(fields) != 5 or fields[0] != MAGIC or fields[1] != VERSION:
        raise MatrixParseError(path, 1, f"expected '{MAGIC} {VERSION} <M> <N> <real|complex>'")
    try:
        rows, cols = int(fields[2]), int(fields[3])
    except ValueError:
        raise MatrixParseError(path, 1, "dimensions must be integers") from None
    if rows < 1 or cols < 1:
        raise MatrixParseError(path, 1, "dimensions must be positive")
    if fields[4] not in ("real", "complex"):
        raise MatrixParseError(path, 1, f"unknown field type {fields[4]!r}")
    return rows, cols, fields[4] == "complex"


def _parse_entry(path: str, line_no: int, token: str, is_complex: bool):
    try:
        if is_complex:
            parts = token.split(",")
            if len(parts) != 2:
                raise ValueError
            return complex(float(parts[0]), float(parts[1]))
        return float(token)
    except ValueError:
        raise MatrixParseError(path, line_no, f"non-numeric entry {token!r}") from None


def read_matrix(path: PathLike) -> np.ndarray:
    """Parse an RDMUD-MAT v1 file; errors name the offending line."""
    path = Path(path)
    name = str(path)
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise MatrixParseError(name, 1, "empty file")
    rows, cols, is_complex = _parse_header(name, lines[0])

    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) < rows:
        raise MatrixParseError(name, len(body) + 2, f"expected {rows} rows, file ends after {len(body)}")
    if len(body) > rows:
        raise MatrixParseError(name, rows + 2, f"unexpected extra row (header declares {rows})")

    array = np.empty((rows, cols), dtype=complex if is_complex else float)
    for i, line in enumerate(body):
        line_no = i + 2
        tokens = line.split()
        if len(tokens) != cols:
            raise MatrixParseError(name, line_no, f"expected {cols} fields, found {len(tokens)}")
        array[i] = [_parse_entry(name, line_no, t, is_complex) for t in tokens]
    return array


def read_vector(path: PathLike) -> np.ndarray:
    """Read a one-column (or one-row) RDMUD-MAT file as a vector."""
    array = read_matrix(path)
    if 1 not in array.shape:
        raise MatrixParseError(str(path), 1, f"expected a vector, found {array.shape[0]}x{array.shape[1]}")
    return array.reshape(-1)


# ============================================================================
# KEYED MATRIX STORE
# ============================================================================

class MatrixStore:
    """Stores generated matrices by recipe key so long searches run once."""

    def __init__(self, storage_dir: PathLike = "matrix_store"):
        self.storage_dir = Path(storage_dir)
        self.storage_dir.mkdir(parents=True, exist_ok=True)

        # In-memory cache for repeated sweep points
        self._cache: Dict[str, np.ndarray] = {}

    def _paths(self, key: str):
        return self.storage_dir / f"{key}.mat", self.storage_dir / f"{key}.json"

    def put(self, key: str, values: np.ndarray, metadata: Optional[dict] = None) -> Path:
        """Store a matrix with a JSON sidecar of metadata."""
        matrix_path, meta_path = self._paths(key)
        write_matrix(matrix_path, values)
        record = dict(metadata or {})
        record["created_at"] = time.strftime("%Y-%m-%d %H:%M:%S")
        with open(meta_path, "w", encoding="utf-8") as f:
            json.dump(record, f, indent=2)
        self._cache[key] = np.array(values, copy=True)
        return matrix_path

    def get(self, key: str) -> Optional[np.ndarray]:
        """Return the stored matrix or None."""
        if key in self._cache:
            return self._cache[key]
        matrix_path, _ = self._paths(key)
        if not matrix_path.exists():
            return None
        try:
            values = read_matrix(matrix_path)
        except MatrixParseError as e:
            get_simulation_logger().log_error(e, context="matrix store entry unreadable")
            return None
        self._cache[key] = values
        return values

    def metadata(self, key: str) -> Optional[dict]:
        _, meta_path = self._paths(key)
        if not meta_path.exists():
            return None
        with open(meta_path, "r", encoding="utf-8") as f:
            return json.load(f)

    def keys(self) -> List[str]:
        return sorted(p.stem for p in self.storage_dir.glob("*.mat"))


# ============================================================================
# CSV
# ============================================================================

def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not np.isfinite(value):
            return ""
        return f"{value:.10g}"
    return str(value)


def write_results_csv(rows: Iterable[dict], stream: TextIO, header: bool = True) -> int:
    """Write sweep rows with fixed columns; missing or undefined values are empty."""
    writer = csv.writer(stream, lineterminator="\n")
    if header:
        writer.writerow(CSV_COLUMNS)
    count = 0
    for row in rows:
        writer.writerow([_format_cell(row.get(column)) for column in CSV_COLUMNS])
        count += 1
    return count


def read_results_csv(stream: TextIO) -> List[dict]:
    return list(csv.DictReader(stream))
