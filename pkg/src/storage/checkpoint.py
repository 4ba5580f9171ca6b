"""Flat parameter checkpoint container.

Layout::

    b"EDCK" | uint32 LE manifest length | UTF-8 JSON manifest | payload

The manifest records the model configuration, the SHA-256 of the payload,
and for every parameter its shape, dtype ("f32" or "f64") and byte offset
into the payload. Payload arrays are raw little-endian, row-major.
"""

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import numpy as np
import torch
from loguru import logger

from src.core.errors import CheckpointError, CheckpointMismatch

MAGIC = b"EDCK"
FORMAT = "edcflow-checkpoint/1"
_DTYPES = {"f32": "<f4", "f64": "<f8"}
_TORCH_DTYPES = {torch.float32: "f32", torch.float64: "f64"}


@dataclass
class Checkpoint:
    """Decoded checkpoint contents.

    Attributes:
        tensors: Parameter name -> tensor
        model_config: Model configuration stored alongside the weights
        sha256: Hex digest of the payload
    """

    tensors: dict[str, torch.Tensor]
    model_config: dict[str, Any]
    sha256: str

    def param_count(self) -> int:
        return sum(t.numel() for t in self.tensors.values())


def save_checkpoint(
    path: Path, state: dict[str, torch.Tensor], model_config: Optional[dict[str, Any]] = None
) -> str:
    """Write named tensors to ``path``.

    Args:
        path: Destination file
        state: Parameter name -> float32/float64 tensor
        model_config: JSON-serializable model configuration

    Returns:
        SHA-256 hex digest of the payload
    """
    entries: dict[str, dict[str, Any]] = {}
    chunks: list[bytes] = []
    offset = 0
    for name, tensor in state.items():
        if tensor.dtype not in _TORCH_DTYPES:
            raise CheckpointError(f"unsupported dtype {tensor.dtype} for {name}")
        dtype = _TORCH_DTYPES[tensor.dtype]
        raw = tensor.detach().cpu().contiguous().numpy().astype(_DTYPES[dtype]).tobytes()
        entries[name] = {"shape": list(tensor.shape), "dtype": dtype, "offset": offset}
        chunks.append(raw)
        offset += len(raw)

    payload = b"".join(chunks)
    digest = hashlib.sha256(payload).hexdigest()
    manifest = json.dumps(
        {
            "format": FORMAT,
            "model_config": model_config or {},
            "sha256": digest,
            "tensors": entries,
        },
        sort_keys=True,
    ).encode("utf-8")

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(manifest)))
        f.write(manifest)
        f.write(payload)

    logger.info(f"Saved checkpoint {path} ({len(entries)} tensors, {offset} bytes)")
    return digest


def load_checkpoint(path: Path) -> Checkpoint:
    """Read and verify a checkpoint.

    Raises:
        CheckpointError: If the file is missing, truncated, or fails its hash check
    """
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if len(data) < 8 or data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an EDCK checkpoint")
    (manifest_len,) = struct.unpack("<I", data[4:8])
    if len(data) < 8 + manifest_len:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(data[8 : 8 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: unreadable manifest: {e}") from e

    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unknown format {manifest.get('format')!r}")

    payload = data[8 + manifest_len :]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != manifest.get("sha256"):
        raise CheckpointError(f"{path}: payload hash mismatch")

    tensors: dict[str, torch.Tensor] = {}
    for name, entry in manifest["tensors"].items():
        dtype = np.dtype(_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = entry["offset"] + count * dtype.itemsize
        if end > len(payload):
            raise CheckpointError(f"{path}: tensor {name} runs past the payload")
        array = np.frombuffer(payload, dtype=dtype, count=count, offset=entry["offset"])
        tensors[name] = torch.from_numpy(array.astype(dtype.newbyteorder("="))).reshape(
            entry["shape"]
        )

    return Checkpoint(tensors=tensors, model_config=manifest["model_config"], sha256=digest)


def load_into(module: torch.nn.Module, checkpoint: Checkpoint) -> None:
    """Copy checkpoint tensors into ``module``'s parameters.

    Raises:
        CheckpointMismatch: If names or shapes disagree with the module
    """
    own = dict(module.named_parameters())
    missing = sorted(set(own) - set(checkpoint.tensors))
    unexpected = sorted(set(checkpoint.tensors) - set(own))
    if missing or unexpected:
        raise CheckpointMismatch(
            f"checkpoint does not match model: missing={missing[:5]} unexpected={unexpected[:5]}"
        )
    for name, param in own.items():
        tensor = checkpoint.tensors[name]
        if tuple(tensor.shape) != tuple(param.shape):
            raise CheckpointMismatch(
                f"{name}: checkpoint shape {tuple(tensor.shape)} != model {tuple(param.shape)}"
            )
    with torch.no_grad():
        for name, param in own.items():
            param.copy_(checkpoint.tensors[name].to(param.dtype))
