"""Versioned binary checkpoint container: JSON header + named parameter blocks.

Layout: 8-byte magic, little-endian uint64 header length, UTF-8 JSON header,
raw array payload. Every block records a sha256 of its payload bytes so frozen
blocks can be byte-compared across training stages.
"""

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from ..errors import CheckpointError

MAGIC = b"LCCKPT01"
VERSION = 1

Blocks = dict[str, dict[str, np.ndarray]]


@dataclass
class Checkpoint:
    config: dict
    meta: dict
    blocks: Blocks
    block_hashes: dict[str, str]

    def require(self, name: str) -> dict[str, np.ndarray]:
        if name not in self.blocks:
            raise CheckpointError(f"checkpoint is missing block '{name}'")
        return self.blocks[name]


def _block_payload(arrays: dict[str, np.ndarray]) -> tuple[bytes, list[dict]]:
    chunks = []
    index = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        raw = arr.tobytes()
        index.append(
            {
                "name": name,
                "dtype": str(arr.dtype),
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        chunks.append(raw)
        offset += len(raw)
    return b"".join(chunks), index


def save_checkpoint(path, config: dict, blocks: Blocks, meta: dict | None = None) -> dict[str, str]:
    """Write a checkpoint; returns the per-block content hashes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payloads = {}
    header_blocks = {}
    offset = 0
    hashes = {}
    for bname in sorted(blocks):
        payload, index = _block_payload(blocks[bname])
        digest = hashlib.sha256(payload).hexdigest()
        header_blocks[bname] = {
            "offset": offset,
            "nbytes": len(payload),
            "sha256": digest,
            "arrays": index,
        }
        payloads[bname] = payload
        hashes[bname] = digest
        offset += len(payload)
    header = {
        "version": VERSION,
        "config": config,
        "meta": meta or {},
        "blocks": header_blocks,
    }
    raw_header = json.dumps(header).encode("utf-8")
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw_header)))
        fh.write(raw_header)
        for bname in sorted(blocks):
            fh.write(payloads[bname])
    tmp.replace(path)
    return hashes


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint container")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {header.get('version')}")
        payload = fh.read()
    blocks: Blocks = {}
    hashes: dict[str, str] = {}
    for bname, binfo in header["blocks"].items():
        raw = payload[binfo["offset"] : binfo["offset"] + binfo["nbytes"]]
        digest = hashlib.sha256(raw).hexdigest()
        if digest != binfo["sha256"]:
            raise CheckpointError(f"block '{bname}' in {path} is corrupt")
        arrays = {}
        for ainfo in binfo["arrays"]:
            buf = raw[ainfo["offset"] : ainfo["offset"] + ainfo["nbytes"]]
            arrays[ainfo["name"]] = np.frombuffer(buf, dtype=np.dtype(ainfo["dtype"])).reshape(
                ainfo["shape"]
            ).copy()
        blocks[bname] = arrays
        hashes[bname] = digest
    return Checkpoint(
        config=header["config"], meta=header["meta"], blocks=blocks, block_hashes=hashes
    )


def state_dict_arrays(module: torch.nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def _to_tensor(arr: np.ndarray) -> torch.Tensor:
    # from_numpy promotes 0-dim arrays to shape (1,); restore the true shape.
    return torch.from_numpy(np.ascontiguousarray(arr)).reshape(arr.shape)


def load_state_arrays(module: torch.nn.Module, arrays: dict[str, np.ndarray]) -> None:
    module.load_state_dict({k: _to_tensor(v) for k, v in arrays.items()})


def module_hash(module: torch.nn.Module) -> str:
    """Content hash of a module's parameters, matching its saved-block hash."""
    payload, _ = _block_payload(state_dict_arrays(module))
    return hashlib.sha256(payload).hexdigest()


def optimizer_arrays(opt: torch.optim.Optimizer) -> tuple[dict[str, np.ndarray], list]:
    """AdamW state tensors flattened to named arrays plus JSON-able param groups."""
    sd = opt.state_dict()
    arrays: dict[str, np.ndarray] = {}
    for idx, entry in sd["state"].items():
        for key, val in entry.items():
            arrays[f"{idx}.{key}"] = (
                val.detach().cpu().numpy() if torch.is_tensor(val) else np.asarray(val)
            )
    return arrays, sd["param_groups"]


def load_optimizer_arrays(
    opt: torch.optim.Optimizer, arrays: dict[str, np.ndarray], param_groups: list
) -> None:
    state: dict[int, dict] = {}
    for name, arr in arrays.items():
        idx, key = name.split(".", 1)
        state.setdefault(int(idx), {})[key] = _to_tensor(arr)
    groups = [dict(g, betas=tuple(g["betas"])) if "betas" in g else dict(g)
              for g in param_groups]
    opt.load_state_dict({"state": state, "param_groups": groups})
