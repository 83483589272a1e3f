"""CSV persistence for trajectories, metrics and stability maps.

Floats are written with ``repr`` so reading a file back reproduces the
in-memory values bit for bit. Lines starting with ``#`` carry metadata.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from platoonlab.stability import Axis, StabilityMap


def _fmt(x) -> str:
    return repr(float(x))


def _comments(fh, comments: Optional[Dict[str, str]]):
    for k, v in (comments or {}).items():
        fh.write(f"# {k}={v}\n")


def trajectory_header(n_vehicles: int) -> List[str]:
    cols = ["t"]
    for i in range(n_vehicles):
        cols += [f"veh{i}_x", f"veh{i}_v", f"veh{i}_a"]
    cols += [f"gap_{i}_{i + 1}" for i in range(n_vehicles - 1)]
    return cols


def write_trajectory_csv(traj, path, comments: Optional[Dict[str, str]] = None) -> Path:
    path = Path(path)
    n = traj.x.shape[1]
    gaps = traj.x[:, :-1] - traj.x[:, 1:]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _comments(fh, comments)
        fh.write(",".join(trajectory_header(n)) + "\n")
        for k in range(traj.t.shape[0]):
            row = [_fmt(traj.t[k])]
            for i in range(n):
                row += [_fmt(traj.x[k, i]), _fmt(traj.v[k, i]), _fmt(traj.a[k, i])]
            row += [_fmt(g) for g in gaps[k]]
            fh.write(",".join(row) + "\n")
    return path


def _read_rows(path):
    meta, rows = {}, []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition("=")
                meta[key.strip()] = val
                continue
            rows.append(line.rstrip("\n"))
    return meta, rows


def read_trajectory_csv(path) -> Dict[str, np.ndarray]:
    """Return ``t``, ``x``, ``v``, ``a``, ``gaps`` arrays and the ``meta`` dict."""
    meta, rows = _read_rows(path)
    header = rows[0].split(",")
    n = sum(1 for c in header if c.endswith("_x"))
    data = np.array([[float(c) for c in r.split(",")] for r in rows[1:]], dtype=float)
    data = data.reshape(-1, len(header))
    t = data[:, 0]
    veh = data[:, 1:1 + 3 * n].reshape(-1, n, 3)
    return {"t": t, "x": veh[:, :, 0].copy(), "v": veh[:, :, 1].copy(),
            "a": veh[:, :, 2].copy(), "gaps": data[:, 1 + 3 * n:].copy(), "meta": meta}


def write_rows_csv(path, header: Sequence[str], rows: Iterable[Sequence],
                   comments: Optional[Dict[str, str]] = None) -> Path:
    """Plain table writer; floats use round-trip formatting."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _comments(fh, comments)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(c) if isinstance(c, (float, np.floating)) else c for c in r])
    return path


def write_map_csv(smap: StabilityMap, path, comments: Optional[Dict[str, str]] = None) -> Path:
    """Axis rows first, then the values row-major with the last axis along each line."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        _comments(fh, comments)
        fh.write(f"#condition,{smap.condition}\n")
        for a in smap.axes:
            fh.write(f"#axis,{a.name},{_fmt(a.lo)},{_fmt(a.hi)},{a.resolution}\n")
        for k in sorted(smap.fixed):
            fh.write(f"#fixed,{k},{_fmt(smap.fixed[k])}\n")
        flat = smap.values.reshape(-1, smap.values.shape[-1])
        for row in flat:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def read_map_csv(path) -> StabilityMap:
    condition, axes, fixed, rows = None, [], {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#condition,"):
                condition = line.split(",", 1)[1]
            elif line.startswith("#axis,"):
                _, name, lo, hi, res = line.split(",")
                axes.append(Axis(name, float(lo), float(hi), int(res)))
            elif line.startswith("#fixed,"):
                _, k, v = line.split(",")
                fixed[k] = float(v)
            elif line.startswith("#") or not line:
                continue
            else:
                rows.append([float(c) for c in line.split(",")])
    shape = tuple(a.resolution for a in axes)
    values = np.array(rows, dtype=float).reshape(shape)
    return StabilityMap(condition, tuple(axes), values, fixed)
