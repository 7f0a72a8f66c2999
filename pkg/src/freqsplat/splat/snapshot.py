"""Binary scene snapshots.

Layout (little-endian):

    magic          4 bytes  b"FSG2"
    version        uint32   1
    count          uint64
    count records, each 88 bytes, fields in declaration order:
        x, y                 float64
        log_scale_1, _2      float64
        rotation             float64
        raw_opacity          float64
        r, g, b              float64
        depth_key            float64
        creation_index       uint64

A JSON sidecar (same stem, ``.json``) carries run metadata such as the image
size and background needed to re-render the scene. Keys are sorted so files
are diffable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .gaussians import GaussianSet

MAGIC = b"FSG2"
VERSION = 1
HEADER = struct.Struct("<4sIQ")
RECORD_DTYPE = np.dtype(
    [
        ("x", "<f8"),
        ("y", "<f8"),
        ("log_scale_1", "<f8"),
        ("log_scale_2", "<f8"),
        ("rotation", "<f8"),
        ("raw_opacity", "<f8"),
        ("r", "<f8"),
        ("g", "<f8"),
        ("b", "<f8"),
        ("depth_key", "<f8"),
        ("creation_index", "<u8"),
    ]
)


class SnapshotError(ValueError):
    pass


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_snapshot(gs: GaussianSet, path, metadata: dict | None = None) -> None:
    path = Path(path)
    rec = np.empty(len(gs), dtype=RECORD_DTYPE)
    p = gs.params
    rec["x"], rec["y"] = p["position"][:, 0], p["position"][:, 1]
    rec["log_scale_1"], rec["log_scale_2"] = p["log_scale"][:, 0], p["log_scale"][:, 1]
    rec["rotation"] = p["rotation"]
    rec["raw_opacity"] = p["raw_opacity"]
    rec["r"], rec["g"], rec["b"] = p["color"][:, 0], p["color"][:, 1], p["color"][:, 2]
    rec["depth_key"] = gs.depth_key
    rec["creation_index"] = gs.creation_index
    path.write_bytes(HEADER.pack(MAGIC, VERSION, len(gs)) + rec.tobytes())
    meta = dict(metadata or {})
    meta.setdefault("format_version", VERSION)
    meta["count"] = len(gs)
    meta["next_index"] = gs.next_index
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_snapshot(path) -> tuple[GaussianSet, dict]:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise SnapshotError(f"{path}: file too short for header")
    magic, version, count = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported version {version}")
    body = raw[HEADER.size :]
    if len(body) != count * RECORD_DTYPE.itemsize:
        raise SnapshotError(f"{path}: expected {count} records, found {len(body)} bytes")
    rec = np.frombuffer(body, dtype=RECORD_DTYPE)
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else {}
    params = {
        "position": np.stack([rec["x"], rec["y"]], axis=1),
        "log_scale": np.stack([rec["log_scale_1"], rec["log_scale_2"]], axis=1),
        "rotation": rec["rotation"].copy(),
        "raw_opacity": rec["raw_opacity"].copy(),
        "color": np.stack([rec["r"], rec["g"], rec["b"]], axis=1),
    }
    gs = GaussianSet(
        params,
        rec["depth_key"].copy(),
        rec["creation_index"].astype(np.int64),
        meta.get("next_index"),
    )
    return gs, meta
