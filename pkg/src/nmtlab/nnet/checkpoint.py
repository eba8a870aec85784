"""Binary checkpoint format.

Layout: magic "NMTL", little-endian u32 format version, u64 JSON header
length, the JSON header (config, step, optimizer/rng state, tensor index,
embedded vocab and merges), then raw little-endian tensor payloads in index
order.  Float64 storage round-trips bit-exactly; an optional float32 storage
mode halves size at the cost of precision.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ModelConfig, OptimizerHyper
from .tensor import Tensor

MAGIC = b"NMTL"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def _rng_state_to_json(state: dict) -> dict:
    def conv(x):
        if isinstance(x, np.ndarray):
            return {"__array__": x.tolist(), "dtype": str(x.dtype)}
        if isinstance(x, dict):
            return {k: conv(v) for k, v in x.items()}
        if isinstance(x, (np.integer,)):
            return int(x)
        return x

    return conv(state)


def _rng_state_from_json(doc: dict) -> dict:
    def conv(x):
        if isinstance(x, dict):
            if "__array__" in x:
                return np.array(x["__array__"], dtype=x["dtype"])
            return {k: conv(v) for k, v in x.items()}
        return x

    return conv(doc)


@dataclass
class Checkpoint:
    config: ModelConfig
    hyper: OptimizerHyper
    params: dict[str, np.ndarray]
    opt_m: dict[str, np.ndarray]
    opt_v: dict[str, np.ndarray]
    step: int
    rng_states: dict
    vocab_fingerprint: str
    vocab_doc: Optional[dict] = None       # {"tokens": {...}, "pos_tags": {...}}
    merges: Optional[list] = None          # [[left, right], ...]
    extras: dict = field(default_factory=dict)

    def param_tensors(self) -> dict[str, Tensor]:
        return {name: Tensor(arr) for name, arr in self.params.items()}


def save_checkpoint(ckpt: Checkpoint, path, storage32: bool = False) -> None:
    dtype = "<f4" if storage32 else "<f8"
    index = []
    payloads = []
    offset = 0

    def push(name, arr):
        nonlocal offset
        blob = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        index.append(
            {"name": name, "shape": list(arr.shape), "dtype": dtype, "offset": offset}
        )
        payloads.append(blob)
        offset += len(blob)

    for name, arr in ckpt.params.items():
        push(f"param.{name}", arr)
    for name, arr in ckpt.opt_m.items():
        push(f"adam.m.{name}", arr)
    for name, arr in ckpt.opt_v.items():
        push(f"adam.v.{name}", arr)

    header = {
        "config": ckpt.config.to_dict(),
        "hyper": ckpt.hyper.to_dict(),
        "step": ckpt.step,
        "rng_states": _rng_state_to_json(ckpt.rng_states),
        "vocab_fingerprint": ckpt.vocab_fingerprint,
        "vocab": ckpt.vocab_doc,
        "merges": ckpt.merges,
        "extras": ckpt.extras,
        "tensors": index,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for p in payloads:
            fh.write(p)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()

    tensors: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        dt = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype=dt, count=count, offset=start)
        tensors[entry["name"]] = (
            arr.reshape(entry["shape"]).astype(np.float64, copy=True)
        )

    params = {}
    opt_m = {}
    opt_v = {}
    for name, arr in tensors.items():
        if name.startswith("param."):
            params[name[len("param."):]] = arr
        elif name.startswith("adam.m."):
            opt_m[name[len("adam.m."):]] = arr
        elif name.startswith("adam.v."):
            opt_v[name[len("adam.v."):]] = arr
        else:
            raise CheckpointError(f"{path}: unknown tensor kind {name!r}")

    return Checkpoint(
        config=ModelConfig.from_dict(header["config"]),
        hyper=OptimizerHyper.from_dict(header["hyper"]),
        params=params,
        opt_m=opt_m,
        opt_v=opt_v,
        step=header["step"],
        rng_states=_rng_state_from_json(header["rng_states"]),
        vocab_fingerprint=header["vocab_fingerprint"],
        vocab_doc=header.get("vocab"),
        merges=[tuple(m) for m in header["merges"]] if header.get("merges") else None,
        extras=header.get("extras", {}),
    )
