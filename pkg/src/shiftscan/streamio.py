"""CSV observation streams, statistic traces, and JSON-shaped reports.

Observation CSV: one comma-separated row per observation, optional
`#`-prefixed header lines, floats printed with %.17g so files round-trip
to the exact in-memory doubles.  Reports are serialized with sorted keys
and no timestamps: a run's outputs are a pure function of its inputs.
"""

import json
from pathlib import Path

import numpy as np

from .errors import DataError

_FLOAT_FMT = "%.17g"


def format_float(v: float) -> str:
    return _FLOAT_FMT % v


def write_observations(path, X, header_lines=()) -> None:
    """Rows of X as CSV; header_lines are emitted first, '# '-prefixed."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w", encoding="ascii") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for row in X:
            fh.write(",".join(_FLOAT_FMT % v for v in row))
            fh.write("\n")


def read_observations(path) -> np.ndarray:
    """Parse an observation CSV into a (T, d) array.

    Dimension is set by the first data row and enforced afterwards; a bad
    record aborts with its observation index (1-based) and file line.
    """
    rows = []
    dim = None
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            idx = len(rows) + 1
            parts = line.split(",")
            try:
                row = [float(p) for p in parts]
            except ValueError:
                raise DataError(
                    f"{path}: observation {idx} (line {lineno}) has a non-numeric field"
                ) from None
            if dim is None:
                dim = len(row)
            elif len(row) != dim:
                raise DataError(
                    f"{path}: observation {idx} (line {lineno}) has {len(row)} fields, "
                    f"expected {dim}"
                )
            if not all(np.isfinite(row)):
                raise DataError(
                    f"{path}: observation {idx} (line {lineno}) has a non-finite value"
                )
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: no observation rows found")
    return np.array(rows, dtype=np.float64)


_TRACE_HEADER = "t,statistic,estimated_k"


def write_trace(path, trace) -> None:
    """Trace rows `t,statistic,estimated_k`; estimated_k empty when undefined."""
    trace = np.asarray(trace, dtype=np.float64).reshape(-1, 3)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(_TRACE_HEADER + "\n")
        for t, stat, khat in trace:
            k = "" if khat <= 0 else str(int(khat))
            fh.write(f"{int(t)},{_FLOAT_FMT % stat},{k}\n")


def read_trace(path):
    """Inverse of write_trace: list of (t, statistic, estimated_k | None)."""
    out = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != _TRACE_HEADER:
            raise DataError(f"{path}: unexpected trace header {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            t, stat, khat = line.split(",")
            out.append((int(t), float(stat), int(khat) if khat else None))
    return out


def dump_report(doc: dict) -> str:
    """Canonical report text: sorted keys, 2-space indent, trailing newline."""
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(path, doc: dict) -> None:
    Path(path).write_text(dump_report(doc), encoding="ascii")
