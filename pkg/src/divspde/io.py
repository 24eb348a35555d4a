"""CSV and JSON writers. Floats are written with 17 significant digits so that
every double survives a round trip exactly."""

import csv
import json
import math

import numpy as np


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]


def plain(obj):
    """Recursively convert numpy scalars/arrays and tuples into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def field_snapshot(grid, time, values, **extra):
    return {"grid": {"dim": grid.dim, "extent": list(grid.extent), "nodes": list(grid.nodes)},
            "time": float(time), "values": np.asarray(values, dtype=float).tolist(), **extra}


def write_field_csv(path, grid, values):
    """Node-major (C order) field dump: one row per interior node with its coordinates."""
    values = np.asarray(values, dtype=float)
    coords = [c.ravel() for c in grid.mesh()]
    header = [f"x{a}" for a in range(grid.dim)] + ["value"]
    rows = zip(*coords, values.ravel())
    write_csv(path, header, rows)


def read_field_csv(path, grid):
    _, rows = read_csv(path)
    return np.array([float(r[-1]) for r in rows]).reshape(grid.shape)
