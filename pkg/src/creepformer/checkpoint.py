"""Self-describing checkpoint container.

Layout: 4-byte magic, uint32 LE format version, uint64 LE header length,
JSON header (config, ablation, normalization stats, tensor index, meta),
then raw float64 little-endian tensor payloads in index order. An
optional background feature matrix rides along for explanation serving.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .data import NormStats
from .model import AblationSpec, TataConfig, TataModel

MAGIC = b"TATC"
VERSION = 1


class CheckpointError(ValueError):
    """File is not a readable checkpoint of a supported version."""


@dataclass
class Checkpoint:
    model: TataModel
    stats: NormStats
    background: np.ndarray | None
    meta: dict


def save_checkpoint(path, model: TataModel, stats: NormStats,
                    background: np.ndarray | None = None,
                    meta: dict | None = None) -> None:
    """Serialize model + normalization stats (values stored as float64 LE)."""
    index = []
    payload = bytearray()
    for name, p in model.params.items():
        arr = np.ascontiguousarray(p.data, dtype="<f8")
        index.append({"name": name, "shape": list(arr.shape), "offset": len(payload)})
        payload += arr.tobytes()
    header: dict = {
        "config": model.config.to_dict(),
        "ablation": model.ablation.to_dict(),
        "norm_stats": stats.to_dict(),
        "tensors": index,
        "meta": meta or {},
    }
    if background is not None:
        bg = np.ascontiguousarray(background, dtype="<f8")
        header["background"] = {"shape": list(bg.shape), "offset": len(payload)}
        payload += bg.tobytes()
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_checkpoint(path, dtype=np.float64) -> Checkpoint:
    """Rebuild model, stats and optional background from a checkpoint file."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}, not a checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payload = fh.read()

    def read_tensor(entry) -> np.ndarray:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        return arr.reshape(shape).astype(np.float64)

    config = TataConfig.from_dict(header["config"])
    ablation = AblationSpec.from_dict(header["ablation"])
    model = TataModel(config, ablation, dtype=dtype)
    state = {entry["name"]: read_tensor(entry) for entry in header["tensors"]}
    model.load_state_dict(state)
    stats = NormStats.from_dict(header["norm_stats"])
    background = read_tensor(header["background"]) if "background" in header else None
    return Checkpoint(model, stats, background, header.get("meta", {}))
