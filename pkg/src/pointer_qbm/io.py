"""Checkpoints, CSV/JSON emission and run manifests.

Floats are always written with 17 significant digits so that re-reading
reproduces them exactly and repeated runs give byte-identical files.
"""
from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .grid import Grid, GridState

MAGIC = b"QBMPSI\x00\x01"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIdIddd")       # magic, version, kappa, n, x_min, x_max, time


class CheckpointError(IOError):
    pass


def write_checkpoint(path, state: GridState):
    path = Path(path)
    g = state.grid
    head = _HEADER.pack(MAGIC, FORMAT_VERSION, state.kappa, g.n_points, g.x_min, g.x_max, state.time)
    try:
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(np.ascontiguousarray(state.psi, dtype="<c8").tobytes())
    except OSError as e:
        raise CheckpointError(f"cannot write checkpoint {path}: {e}") from e


def read_checkpoint(path) -> GridState:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, ver, kappa, n, x_min, x_max, t = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a wavefunction checkpoint")
    if ver != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {ver}")
    body = raw[_HEADER.size:]
    if len(body) != 8 * n:
        raise CheckpointError(f"{path}: expected {n} amplitudes, found {len(body) // 8}")
    psi = np.frombuffer(body, dtype="<c8").astype(np.complex128)
    return GridState(Grid(n, x_min, x_max), psi, kappa, t)


# ---------------------------------------------------------------------------
# text formats


def fmt_float(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt_float(v)
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e


def read_csv(path):
    """Header list and a float array (one row per line)."""
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        data = [[float(c) for c in row] for row in rd if row]
    return header, np.array(data, dtype=float).reshape(-1, len(header))


def _to_plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _to_plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj, indent=2) -> str:
    """JSON with sorted keys and 17-significant-digit floats (non-finite as null)."""
    import json

    def enc(v, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(v, dict):
            if not v:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {enc(v[k], level + 1)}" for k in sorted(v)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(v, list):
            if not v:
                return "[]"
            if all(not isinstance(e, (dict, list)) for e in v):
                return "[" + ", ".join(enc(e, level) for e in v) + "]"
            return "[\n" + ",\n".join(pad + enc(e, level + 1) for e in v) + "\n" + end + "]"
        if isinstance(v, bool) or v is None:
            return json.dumps(v)
        if isinstance(v, int):
            return str(v)
        if isinstance(v, float):
            return fmt_float(v) if math.isfinite(v) else "null"
        return json.dumps(v)

    return enc(_to_plain(obj), 0) + "\n"


def write_json(path, obj):
    path = Path(path)
    try:
        path.write_text(dumps_json(obj))
    except OSError as e:
        raise OSError(f"cannot write {path}: {e}") from e


def write_manifest(out_dir, command, config: dict, seed, wall_time, outputs=(), results=None):
    """manifest.json next to the outputs: resolved config, seed, version, wall time."""
    man = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "wall_time_s": wall_time,
        "outputs": [os.path.basename(str(o)) for o in outputs],
    }
    if results is not None:
        man["results"] = results
    path = Path(out_dir) / f"{command}.manifest.json"
    write_json(path, man)
    return path


# ---------------------------------------------------------------------------
# trajectory files

TRAJ_HEADER = ["traj_id", "t", "x", "p", "vx", "vp", "cxp"]
JUMPS_HEADER = ["traj_id", "t_jump"]


def write_trajectories(path, records):
    rows = []
    for r in records:
        for t, m in zip(r.times, r.moments):
            rows.append((r.index, t, *m))
    write_csv(path, TRAJ_HEADER, rows)


def write_jumps(path, records):
    write_csv(path, JUMPS_HEADER, [(r.index, t) for r in records for t in r.jump_times])


def read_trajectories(path):
    """(ids, t, x, p) from a combined trajectory file; x, p have shape (N, len(t))."""
    header, data = read_csv(path)
    col = {h: i for i, h in enumerate(header)}
    missing = [h for h in ("traj_id", "t", "x", "p") if h not in col]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    ids = np.unique(data[:, col["traj_id"]]).astype(int)
    xs, ps, t0 = [], [], None
    for i in ids:
        sel = data[:, col["traj_id"]] == i
        t = data[sel, col["t"]]
        if t0 is None:
            t0 = t
        elif len(t) != len(t0) or np.any(t != t0):
            raise ValueError(f"{path}: trajectory {i} is sampled at different times")
        xs.append(data[sel, col["x"]])
        ps.append(data[sel, col["p"]])
    return ids, t0, np.array(xs), np.array(ps)
