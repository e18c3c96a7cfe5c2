"""Binary gradient-dump and text label-file formats.

Gradient dump layout (all integers and floats little-endian):

    offset  size  field
    0       4     magic "EPGD"
    4       4     version (u32), currently 1
    8       8     n (u64) - row count
    16      8     d (u64) - columns per row
    24      1     dtype (u8): 0 = float32, 1 = float64
    25      7     reserved (written as zeros, ignored on read)
    32      n*d   values, row-major

Labels file: one line per example, ``<index>,<class>`` with an optional
third column ``poison`` marking ground-truth poisons. Indices 0..n-1 must
each appear exactly once.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FileFormatError, InvalidInput

MAGIC = b"EPGD"
VERSION = 1
HEADER_SIZE = 32
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {"float32": 0, "float64": 1}


def write_gradient_dump(path, matrix, dtype: str = "float32") -> None:
    if dtype not in _DTYPE_CODES:
        raise InvalidInput(f"dtype must be float32 or float64, got {dtype!r}")
    rows = np.asarray(matrix)
    if rows.ndim != 2:
        raise InvalidInput("gradient dump payload must be 2-dimensional")
    code = _DTYPE_CODES[dtype]
    header = struct.pack(
        "<4sIQQB7x", MAGIC, VERSION, rows.shape[0], rows.shape[1], code
    )
    payload = np.ascontiguousarray(rows, dtype=_DTYPES[code]).tobytes()
    Path(path).write_bytes(header + payload)


def read_gradient_dump(path) -> tuple[np.ndarray, str]:
    """Returns (rows widened to float64, source dtype name)."""
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FileFormatError(
            f"truncated header: {len(data)} bytes, magic needs 4", offset=len(data)
        )
    if data[:4] != MAGIC:
        raise FileFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}", offset=0)
    if len(data) < HEADER_SIZE:
        raise FileFormatError(
            f"truncated header: {len(data)} of {HEADER_SIZE} bytes", offset=len(data)
        )
    version, n, d, code = struct.unpack_from("<IQQB", data, 4)
    if version != VERSION:
        raise FileFormatError(f"unsupported version {version}", offset=4)
    if code not in _DTYPES:
        raise FileFormatError(f"unknown dtype code {code}", offset=24)
    dt = _DTYPES[code]
    expected = n * d * dt.itemsize
    actual = len(data) - HEADER_SIZE
    if actual < expected:
        raise FileFormatError(
            f"payload truncated: expected {expected} bytes, file ends "
            f"{expected - actual} bytes short",
            offset=len(data),
        )
    if actual > expected:
        raise FileFormatError(
            f"{actual - expected} trailing bytes after payload",
            offset=HEADER_SIZE + expected,
        )
    values = np.frombuffer(data, dtype=dt, count=n * d, offset=HEADER_SIZE)
    rows = values.reshape(n, d).astype(np.float64)
    return rows, dt.name.replace("<", "")


def write_labels_file(path, labels, poison_mask=None) -> None:
    y = np.asarray(labels, dtype=np.int64)
    lines = []
    for i, c in enumerate(y):
        if poison_mask is not None and poison_mask[i]:
            lines.append(f"{i},{c},poison")
        else:
            lines.append(f"{i},{c}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_labels_file(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Returns (labels, poison mask or None if no poison column appears)."""
    text = Path(path).read_text(encoding="utf-8")
    entries: dict[int, tuple[int, bool]] = {}
    any_poison = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) not in (2, 3):
            raise FileFormatError(f"expected 2 or 3 columns, got {len(parts)}", line=lineno)
        try:
            idx = int(parts[0])
            cls = int(parts[1])
        except ValueError:
            raise FileFormatError(f"non-integer index or class in {line!r}", line=lineno) from None
        poison = False
        if len(parts) == 3:
            if parts[2] != "poison":
                raise FileFormatError(
                    f"third column must be 'poison', got {parts[2]!r}", line=lineno
                )
            poison = True
            any_poison = True
        if idx in entries:
            raise FileFormatError(f"duplicate index {idx}", line=lineno)
        if cls < 0:
            raise FileFormatError(f"negative class {cls}", line=lineno)
        entries[idx] = (cls, poison)
    if not entries:
        raise FileFormatError("labels file is empty", line=1)
    n = len(entries)
    if sorted(entries) != list(range(n)):
        missing = next(i for i in range(n) if i not in entries)
        raise FileFormatError(f"indices must cover 0..{n - 1}; {missing} is missing", line=1)
    labels = np.array([entries[i][0] for i in range(n)], dtype=np.int64)
    mask = np.array([entries[i][1] for i in range(n)], dtype=bool) if any_poison else None
    return labels, mask
