"""Binary checkpoints: a JSON header followed by raw little-endian field blocks.

Layout::

    bytes 0..7     magic  b"IQMCHK1\\n"
    bytes 8..15    header length H, unsigned 64-bit little-endian
    bytes 16..16+H UTF-8 JSON header
    remainder      field blocks in header order, C-ordered, dtype as in header

Floats in the header that must round-trip exactly (time, phase slopes) are stored
as ``float.hex`` strings.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from infoqm.action import HydroState
from infoqm.errors import CheckpointError
from infoqm.grid import ComplexField, Grid, GridSpec, Metric, RealField, make_grid

MAGIC = b"IQMCHK1\n"
VERSION = 1


@dataclass
class Checkpoint:
    grid: Grid
    state: Union[ComplexField, HydroState]
    time: float
    config_hash: str


def config_hash(payload: dict) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def save(state, path, time: float = 0.0, config_hash: str = "") -> Path:
    path = Path(path)
    grid = state.grid
    if isinstance(state, ComplexField):
        kind, blocks = "wave", [("psi", np.asarray(state.values, dtype="<c16"))]
        slope = []
    elif isinstance(state, HydroState):
        kind = "hydro"
        blocks = [("p", np.asarray(state.p.values, dtype="<f8")), ("S", np.asarray(state.S.values, dtype="<f8"))]
        slope = [float(s).hex() for s in state.S_slope]
    else:
        raise CheckpointError(f"cannot checkpoint {type(state).__name__}")
    header = {
        "version": VERSION,
        "kind": kind,
        "grid": grid.spec.to_dict(),
        "metric": grid.metric.to_dict(),
        "grid_hash": grid.hash(),
        "time": float(time).hex(),
        "config_hash": config_hash,
        "shape": list(grid.shape),
        "fields": [{"name": n, "dtype": b.dtype.str} for n, b in blocks],
        "S_slope": slope,
    }
    head = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for _, b in blocks:
            fh.write(np.ascontiguousarray(b).tobytes())
    return path


def load(path, grid: Optional[Grid] = None, expected_config: Optional[str] = None) -> Checkpoint:
    """Read a checkpoint; with ``grid`` given, its hash must match the stored one."""
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", data[8:16])
    if len(data) < 16 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[16 : 16 + hlen])
    except ValueError as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    stored = make_grid(GridSpec.from_dict(header["grid"]), Metric.from_dict(header["metric"]))
    if stored.hash() != header["grid_hash"]:
        raise CheckpointError(f"{path}: header grid hash is inconsistent")
    if grid is not None and grid.hash() != header["grid_hash"]:
        raise CheckpointError(f"{path}: grid hash mismatch (checkpoint was written on a different grid)")
    if expected_config is not None and header["config_hash"] != expected_config:
        raise CheckpointError(f"{path}: config hash mismatch")
    shape = tuple(header["shape"])
    count = int(np.prod(shape))
    offset = 16 + hlen
    arrays = {}
    for f in header["fields"]:
        dtype = np.dtype(f["dtype"])
        nbytes = count * dtype.itemsize
        if len(data) < offset + nbytes:
            raise CheckpointError(f"{path}: truncated data block for field {f['name']!r}")
        arrays[f["name"]] = np.frombuffer(data, dtype=dtype, count=count, offset=offset).reshape(shape)
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    g = grid if grid is not None else stored
    if header["kind"] == "wave":
        state = ComplexField(g, arrays["psi"].astype(complex))
    else:
        slope = tuple(float.fromhex(s) for s in header["S_slope"])
        state = HydroState(RealField(g, arrays["p"].astype(float)), RealField(g, arrays["S"].astype(float)), slope,
                           check_norm=False)
    return Checkpoint(g, state, float.fromhex(header["time"]), header["config_hash"])
