"""Deterministic checkpoint container.

Layout: magic ``FDCK``, u32 header length, UTF-8 JSON header (sorted keys),
then the raw little-endian tensor payload.  The header carries the format
string, the checkpoint kind, the embedded NetworkConfig, JSON-safe extras
and a table of tensor records (group/name, dtype, shape, offset, bytes).
Identical state serializes to identical bytes, so save -> load -> save is a
byte-level fixed point.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import torch

from .errors import CheckpointError
from .networks import NetworkConfig

__all__ = [
    "CHECKPOINT_FORMAT",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "ensure_config_matches",
    "optimizer_groups",
    "load_optimizer_groups",
]

CHECKPOINT_FORMAT = "facedub-checkpoint-v1"
_MAGIC = b"FDCK"

_DTYPES = {
    "float32": (torch.float32, "<f4"),
    "float64": (torch.float64, "<f8"),
    "int64": (torch.int64, "<i8"),
    "int32": (torch.int32, "<i4"),
    "uint8": (torch.uint8, "u1"),
    "bool": (torch.bool, "?"),
}
_TORCH_TO_NAME = {v[0]: k for k, v in _DTYPES.items()}


@dataclass
class Checkpoint:
    kind: str
    network_config: NetworkConfig
    groups: dict  # group name -> {tensor name -> torch.Tensor}
    extra: dict

    def group(self, name: str) -> dict:
        if name not in self.groups:
            raise CheckpointError(f"checkpoint has no parameter group {name!r} "
                                  f"(has {sorted(self.groups)})")
        return self.groups[name]


def save_checkpoint(path: str, kind: str, network_config: NetworkConfig,
                    groups: dict, extra: dict | None = None):
    records = []
    payload = bytearray()
    for group_name in sorted(groups):
        tensors = groups[group_name]
        for tensor_name in sorted(tensors):
            t = tensors[tensor_name].detach().cpu().contiguous()
            if t.dtype not in _TORCH_TO_NAME:
                raise CheckpointError(f"unsupported tensor dtype {t.dtype} "
                                      f"for {group_name}/{tensor_name}")
            dtype_name = _TORCH_TO_NAME[t.dtype]
            raw = t.numpy().astype(_DTYPES[dtype_name][1], copy=False).tobytes()
            records.append({
                "key": f"{group_name}/{tensor_name}",
                "dtype": dtype_name,
                "shape": list(t.shape),
                "offset": len(payload),
                "nbytes": len(raw),
            })
            payload.extend(raw)
    header = {
        "format": CHECKPOINT_FORMAT,
        "kind": kind,
        "network_config": network_config.to_dict(),
        "extra": extra or {},
        "tensors": records,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(bytes(payload))


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != _MAGIC:
                raise CheckpointError(f"not a checkpoint file: {path}")
            (header_len,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(header_len).decode("utf-8"))
            payload = fh.read()
    except (OSError, ValueError, struct.error) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    fmt = header.get("format")
    if fmt != CHECKPOINT_FORMAT:
        raise CheckpointError(
            f"checkpoint format version mismatch in {path}: "
            f"found {fmt!r}, this build reads {CHECKPOINT_FORMAT!r}")

    groups: dict = {}
    for rec in header["tensors"]:
        group_name, _, tensor_name = rec["key"].partition("/")
        torch_dtype, np_dtype = _DTYPES[rec["dtype"]]
        raw = payload[rec["offset"]:rec["offset"] + rec["nbytes"]]
        if len(raw) != rec["nbytes"]:
            raise CheckpointError(f"truncated checkpoint payload in {path}")
        arr = np.frombuffer(raw, dtype=np_dtype).reshape(rec["shape"]).copy()
        groups.setdefault(group_name, {})[tensor_name] = torch.from_numpy(arr).to(torch_dtype)
    return Checkpoint(
        kind=header["kind"],
        network_config=NetworkConfig.from_dict(header["network_config"]),
        groups=groups,
        extra=header.get("extra", {}),
    )


def ensure_config_matches(found: NetworkConfig, expected: NetworkConfig):
    """Raise naming the first differing field."""
    for name, value in expected.to_dict().items():
        other = found.to_dict()[name]
        if other != value:
            raise CheckpointError(
                f"NetworkConfig mismatch on field {name!r}: "
                f"checkpoint has {other!r}, expected {value!r}")


def optimizer_groups(optimizer: torch.optim.Optimizer) -> tuple[dict, dict]:
    """Flatten optimizer state into (tensor dict, JSON-safe meta)."""
    state = optimizer.state_dict()
    tensors = {}
    meta = {"param_groups": state["param_groups"], "entries": {}}
    for idx, entry in state["state"].items():
        scalars = {}
        for key, value in entry.items():
            if torch.is_tensor(value):
                tensors[f"{idx}.{key}"] = value
            else:
                scalars[key] = value
        meta["entries"][str(idx)] = scalars
    return tensors, meta


def load_optimizer_groups(optimizer: torch.optim.Optimizer, tensors: dict, meta: dict):
    state: dict = {"param_groups": meta["param_groups"], "state": {}}
    for key, tensor in tensors.items():
        idx_str, _, name = key.partition(".")
        state["state"].setdefault(int(idx_str), {})[name] = tensor
    for idx_str, scalars in meta.get("entries", {}).items():
        state["state"].setdefault(int(idx_str), {}).update(scalars)
    optimizer.load_state_dict(state)
