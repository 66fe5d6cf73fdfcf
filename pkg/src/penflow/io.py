"""Output writers: CSV time series, legacy VTK snapshots, flat binary dumps.

Every file carries the configuration hash; CSV and binary sidecars also
carry the full configuration as JSON.

CSV time series
    ``#``-prefixed header lines (``config_hash``, ``scenario``, ``config``),
    then one header row with the columns of
    :data:`penflow.diagnostics.COLUMNS` and one row per sample time.
    Values are written with ``repr`` so that reruns are byte-identical.

VTK
    Legacy ASCII ``STRUCTURED_POINTS`` with one point per cell centre.  The
    title line holds the hash; the configuration JSON is stored as a
    ``FIELD`` array of character codes named ``config_json``.

Flat binary
    Little-endian float64 arrays written back to back in the order listed
    in the JSON sidecar (``<name>.json``), which also records shapes, time,
    hash and configuration.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .grid import Grid
from .solver import SimState


def _canon(config: dict) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def write_series_csv(path, report, config: dict, config_hash: str, name: str = "") -> Path:
    path = Path(path)
    header = [f"config_hash: {config_hash}", f"scenario: {name}", f"config: {_canon(config)}"]
    path.write_text(report.to_csv(header))
    return path


def read_series_csv(path):
    """Return ``(meta, columns)`` where ``columns`` maps names to float arrays."""
    meta, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# "):
            key, _, val = line[2:].partition(": ")
            meta[key] = val
        else:
            body.append(line)
    rows = list(csv.reader(body))
    names = rows[0]
    data = np.array(rows[1:], dtype=float).reshape(-1, len(names))
    return meta, {n: data[:, i] for i, n in enumerate(names)}


def state_fields(state: SimState) -> dict:
    """Named cell fields of a state, vectors with a leading component axis."""
    out = {"rho": state.rho, "theta": state.theta, "E_m": state.E, "u": state.velocity()}
    for k in range(state.rhoY.shape[0]):
        out[f"Y_{k}"] = state.Y[k]
    return out


def write_vtk(path, state: SimState, grid: Grid, config: dict, config_hash: str,
              extra: dict | None = None) -> Path:
    path = Path(path)
    n = grid.n
    dims = (n, n if grid.dim > 1 else 1, 1)
    x0 = float(grid.axis_centers[0])
    fields = state_fields(state)
    if extra:
        fields.update(extra)
    lines = ["# vtk DataFile Version 3.0",
             f"penflow t={float(state.t)!r} config_hash={config_hash}",
             "ASCII", "DATASET STRUCTURED_POINTS",
             f"DIMENSIONS {dims[0]} {dims[1]} {dims[2]}",
             f"ORIGIN {x0!r} {x0 if grid.dim > 1 else 0.0!r} 0.0",
             f"SPACING {grid.dx!r} {grid.dx if grid.dim > 1 else 1.0!r} 1.0",
             f"POINT_DATA {n ** grid.dim}"]

    def flat(a):
        # VTK orders points with x fastest
        return np.asarray(a, dtype=float).T.ravel() if grid.dim > 1 else np.asarray(a, dtype=float).ravel()

    for name, arr in fields.items():
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == grid.dim:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default",
                      " ".join(repr(float(v)) for v in flat(arr))]
        else:
            comps = [flat(arr[k]) for k in range(arr.shape[0])]
            while len(comps) < 3:
                comps.append(np.zeros_like(comps[0]))
            vec = np.stack(comps, axis=1)
            lines += [f"VECTORS {name} double",
                      "\n".join(" ".join(repr(float(v)) for v in row) for row in vec)]
    codes = list(_canon(config).encode())
    lines += ["FIELD config 1", f"config_json 1 {len(codes)} char",
              " ".join(str(c) for c in codes)]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_binary(path, state: SimState, config: dict, config_hash: str) -> Path:
    """Final-state dump; returns the path of the binary file."""
    path = Path(path)
    arrays = {"rho": state.rho, "m": state.m, "E": state.E, "rhoY": state.rhoY,
              "theta": state.theta, "Y_fallback": state.Y_fallback}
    layout = []
    with open(path, "wb") as fh:
        for name, arr in arrays.items():
            a = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(a.tobytes())
            layout.append({"name": name, "shape": list(a.shape)})
    meta = {"format": "float64 little-endian, arrays back to back", "t": float(state.t),
            "arrays": layout, "config_hash": config_hash, "config": config}
    path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    return path


def read_binary(path) -> tuple[SimState, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype="<f8")
    out, pos = {}, 0
    for entry in meta["arrays"]:
        size = int(np.prod(entry["shape"]))
        out[entry["name"]] = raw[pos:pos + size].reshape(entry["shape"]).copy()
        pos += size
    return SimState(meta["t"], **out), meta


def emit_gnuplot(csv_path, out_dir) -> list:
    """Write ``<stem>_<column>.dat`` two-column files (time, value) for every column."""
    meta, cols = read_series_csv(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(csv_path).stem
    t = cols["t"]
    written = []
    for name, vals in cols.items():
        if name == "t":
            continue
        p = out_dir / f"{stem}_{name}.dat"
        body = [f"# config_hash: {meta.get('config_hash', '')}", f"# t {name}"]
        body += [f"{float(ti)!r} {float(vi)!r}" for ti, vi in zip(t, vals)]
        p.write_text("\n".join(body) + "\n")
        written.append(p)
    return written
