"""Numeric CSV tables: header row required, ``.`` decimals, UTF-8."""
from __future__ import annotations

import csv
import math
from typing import Optional, Sequence

import numpy as np


class DataError(Exception):
    """Input data is unreadable or unusable."""


def read_table(path: str, columns: Optional[Sequence[str]] = None):
    """Read selected numeric columns from a CSV file.

    Returns ``(names, array)`` with one row per data line. Blank lines are
    skipped. Errors carry the offending line number (1-based, header is line 1).
    """
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    with handle:
        reader = csv.reader(handle, strict=True)
        try:
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file, a header row is required")
            header = [h.strip() for h in header]
            if columns is None:
                names = header
            else:
                missing = [c for c in columns if c not in header]
                if missing:
                    raise DataError(f"{path}: unknown column(s) {', '.join(missing)}; "
                                    f"header has {', '.join(header)}")
                names = list(columns)
            picks = [header.index(c) for c in names]
            rows = []
            for record in reader:
                line = reader.line_num
                if not record or all(not f.strip() for f in record):
                    continue
                if len(record) != len(header):
                    raise DataError(f"{path}: line {line}: expected {len(header)} fields, "
                                    f"got {len(record)}")
                row = []
                for name, k in zip(names, picks):
                    cell = record[k].strip()
                    try:
                        value = float(cell)
                    except ValueError:
                        raise DataError(f"{path}: non-numeric value {cell!r} in column "
                                        f"'{name}', row {len(rows) + 1} (line {line})") from None
                    if not math.isfinite(value):
                        raise DataError(f"{path}: non-finite value {cell!r} in column "
                                        f"'{name}', row {len(rows) + 1} (line {line})")
                    row.append(value)
                rows.append(row)
        except csv.Error as exc:
            raise DataError(f"{path}: line {reader.line_num}: malformed CSV ({exc})") from None
        except UnicodeDecodeError:
            raise DataError(f"{path}: not valid UTF-8") from None
    return names, np.array(rows, dtype=float).reshape(len(rows), len(names))


def format_value(v: float) -> str:
    """Shortest text that parses back to the same float."""
    return repr(float(v))


def write_table(handle, names: Sequence[str], data) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(names)
    for row in np.asarray(data, dtype=float):
        writer.writerow([format_value(v) for v in row])
