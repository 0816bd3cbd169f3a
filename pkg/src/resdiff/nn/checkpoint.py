"""Versioned binary checkpoint container.

Layout: magic ``RDCK`` (4 bytes), format version (1 byte), header length
(u32 little-endian), a UTF-8 JSON header, then the raw parameter arrays.
The header lists every array's name, shape and dtype in storage order and
embeds the model config, the noise-schedule spec, the training config and
the RNG seed. Arrays are stored little-endian and C-contiguous.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DecodeError
from ..schedule import ScheduleSpec
from .denoiser import DenoiserConfig

MAGIC = b"RDCK"
VERSION = 1


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    config: DenoiserConfig
    schedule_spec: ScheduleSpec
    train_config: dict
    seed: int
    steps: int = 0
    final_loss: float = float("nan")


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    entries = []
    blobs = []
    for name, arr in ckpt.params.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)}
        )
        blobs.append(le.tobytes())
    header = {
        "format": VERSION,
        "model": ckpt.config.to_dict(),
        "schedule": ckpt.schedule_spec.to_dict(),
        "train": ckpt.train_config,
        "seed": ckpt.seed,
        "steps": ckpt.steps,
        "final_loss": ckpt.final_loss,
        "params": entries,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<B", VERSION))
        f.write(struct.pack("<I", len(head)))
        f.write(head)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if len(data) < 9 or data[:4] != MAGIC:
        raise DecodeError("not a checkpoint file", 0)
    version = data[4]
    if version != VERSION:
        raise DecodeError(f"unsupported checkpoint version {version}", 4)
    (head_len,) = struct.unpack_from("<I", data, 5)
    if len(data) < 9 + head_len:
        raise DecodeError("truncated checkpoint header", len(data))
    header = json.loads(data[9 : 9 + head_len].decode("utf-8"))
    pos = 9 + head_len
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape)) if shape else dtype.itemsize
        if len(data) < pos + nbytes:
            raise DecodeError(f"truncated parameter {entry['name']!r}", pos)
        arr = np.frombuffer(data[pos : pos + nbytes], dtype=dtype).reshape(shape)
        params[entry["name"]] = arr.astype(dtype.newbyteorder("="))
        pos += nbytes
    return Checkpoint(
        params=params,
        config=DenoiserConfig.from_dict(header["model"]),
        schedule_spec=ScheduleSpec.from_dict(header["schedule"]),
        train_config=header["train"],
        seed=int(header["seed"]),
        steps=int(header["steps"]),
        final_loss=float(header["final_loss"]),
    )
