"""Deterministic file formats shared by the experiment runners and the
external plotting component: CSV tables, triod trajectory exports, and JSON
reports.  All floats are written with repr-roundtrip precision and fixed
key ordering so identical configurations produce identical bytes."""

from __future__ import annotations

import csv
import json
import os
from typing import Dict, List, Sequence


def write_table(path, header: Sequence[str], rows: Sequence[Sequence]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_table(path):
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        rows = [[_parse(v) for v in row] for row in r]
    return header, rows


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    return v


def _parse(v):
    try:
        return float(v)
    except ValueError:
        return v


def write_json(path, doc: Dict):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def export_trajectory(trajectory, csv_path, json_path, resolution=None):
    """Triod trajectory as (time, curve, lambda, x, y) rows plus a manifest."""
    rows = []
    for t, snap in zip(trajectory.times, trajectory.snapshots):
        for i, c in enumerate(snap.curves):
            lam = [k / (len(c) - 1) for k in range(len(c))]
            for l, (x, y) in zip(lam, c):
                rows.append([t, i, l, x, y])
    write_table(csv_path, ["time", "curve", "lambda", "x", "y"], rows)
    write_json(json_path, {
        "schema": "triodlab-trajectory-v1",
        "times": [float(t) for t in trajectory.times],
        "angle_mode": trajectory.angle_mode,
        "resolution": resolution or len(trajectory.snapshots[0].curves[0]),
    })


def export_field_csv(field, csv_path, json_path, meta=None):
    """Grid snapshot as (x, y, u1, u2) rows plus a JSON manifest."""
    import numpy as np

    g = field.grid
    sel = g.inside | g.boundary_ring
    xs = g.X[sel]
    ys = g.Y[sel]
    u = field.values[sel]
    rows = np.column_stack([xs, ys, u[:, 0], u[:, 1]])
    write_table(csv_path, ["x", "y", "u1", "u2"], rows.tolist())
    doc = {
        "schema": "triodlab-field-v1",
        "domain": g.domain,
        "resolution": int(g.n),
        "time": float(field.time),
    }
    doc.update(meta or {})
    write_json(json_path, doc)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
