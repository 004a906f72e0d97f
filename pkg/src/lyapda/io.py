"""CSV and flat key-value text helpers shared by the library and the CLI."""

import numpy as np

__all__ = ["format_float", "write_csv", "read_csv"]


def format_float(x):
    # 17 significant digits round-trips any double
    return format(float(x), ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format_float(v)


def read_csv(path):
    """Return ``(header, array)``; empty cells become NaN."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(c) if c else np.nan for c in line.strip().split(",")]
                for line in fh if line.strip()]
    return header, np.array(rows).reshape(len(rows), len(header))
