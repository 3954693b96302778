"""Output writers: snapshots (legacy VTK + CSV), probe traces, run reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

SNAPSHOT_COLUMNS = ("x", "y", "z", "ux", "uy", "uz", "damage")


def _pad3(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape[1] == 3:
        return a
    return np.column_stack([a, np.zeros((a.shape[0], 3 - a.shape[1]))])


def write_snapshot(path, x: np.ndarray, U: np.ndarray, damage: np.ndarray,
                   formats=("vtk", "csv"), title: str = "osbpd snapshot") -> list:
    """Write ``path.vtk`` and/or ``path.csv`` for one state.

    Args:
        path: output stem; suffixes are added per format.
        x: (N, d) reference coordinates.
        U: displacement, flat (d*N) or (N, d).
        damage: (N,) damage field.

    Returns:
        The written file paths.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n, d = x.shape
    xyz = _pad3(x)
    uvw = _pad3(np.asarray(U, dtype=float).reshape(n, d))
    phi = np.asarray(damage, dtype=float)
    written = []
    if "vtk" in formats:
        vtk = path.with_suffix(".vtk")
        with open(vtk, "w") as fh:
            fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA\n")
            fh.write(f"POINTS {n} double\n")
            np.savetxt(fh, xyz, fmt="%.17g")
            fh.write(f"VERTICES {n} {2 * n}\n")
            np.savetxt(fh, np.column_stack([np.ones(n, dtype=int), np.arange(n)]), fmt="%d")
            fh.write(f"POINT_DATA {n}\nVECTORS displacement double\n")
            np.savetxt(fh, uvw, fmt="%.17g")
            fh.write("SCALARS damage double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, phi, fmt="%.17g")
        written.append(vtk)
    if "csv" in formats:
        out = path.with_suffix(".csv")
        np.savetxt(out, np.column_stack([xyz, uvw, phi]), delimiter=",", fmt="%.17g",
                   header=",".join(SNAPSHOT_COLUMNS), comments="")
        written.append(out)
    return written


def read_snapshot_csv(path) -> dict:
    """Inverse of the CSV branch of :func:`write_snapshot`."""
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {"x": table[:, 0:3], "U": table[:, 3:6], "damage": table[:, 6]}


def read_snapshot_vtk(path) -> dict:
    """Read back points, displacement and damage from a snapshot VTK file."""
    lines = Path(path).read_text().splitlines()
    out = {}
    k = 0
    while k < len(lines):
        head = lines[k].split()
        if head and head[0] == "POINTS":
            n = int(head[1])
            out["x"] = np.loadtxt(lines[k + 1:k + 1 + n], ndmin=2)
            k += n
        elif head[:2] == ["VECTORS", "displacement"]:
            out["U"] = np.loadtxt(lines[k + 1:k + 1 + n], ndmin=2)
            k += n
        elif head[:2] == ["SCALARS", "damage"]:
            out["damage"] = np.loadtxt(lines[k + 2:k + 2 + n], ndmin=1)
            k += n + 1
        k += 1
    return out


class ProbeWriter:
    """CSV trace: step, time, then every probe's displacement components."""

    def __init__(self, path, probe_names: list[str], dim: int, extra: tuple = ()):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh)
        comps = "xyz"[:dim]
        self._w.writerow(["step", "time"] + [f"{p}_u{c}" for p in probe_names for c in comps]
                         + list(extra))

    def write(self, step: int, time: float, values, extra=()) -> None:
        self._w.writerow([step, repr(float(time))] + [repr(float(v)) for v in values]
                         + [repr(float(v)) for v in extra])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_probe_csv(path) -> dict:
    """Columns of a probe trace as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    return {h: body[:, k] for k, h in enumerate(header)}


def write_report(path, report: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n")
    return path


def _jsonable(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)
