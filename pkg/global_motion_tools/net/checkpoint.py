"""
Checkpoint files.

Layout:

    8 bytes   magic b"GMRCKPT1"
    8 bytes   header length, little-endian unsigned
    n bytes   UTF-8 JSON header, sorted keys
    rest      little-endian float64 blob, tensors in header order

The header holds the network config, tensor names and shapes, seed, training
step, the optimizer step and any extra metadata (e.g. the training config).
Optimizer moments are stored as tensors named "adam.m.<name>" and
"adam.v.<name>" after the parameters. Saving the loaded result reproduces the
original file byte for byte.
"""

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np

from ..errors import InvalidInputError
from ..logger import get_logger
from .gmr import GmrConfig, GmrParams

__all__ = ["CHECKPOINT_MAGIC", "Checkpoint", "save_checkpoint", "load_checkpoint", "checkpoint_bytes"]

logger = get_logger(__name__)

CHECKPOINT_MAGIC = b"GMRCKPT1"
CHECKPOINT_VERSION = 1
_M_PREFIX = "adam.m."
_V_PREFIX = "adam.v."


@dataclass(eq=False)
class Checkpoint:
    """
    Parameters plus optional optimizer state.

    Attributes:
        params: Network parameters
        seed: Seed the run started from
        step: Training steps completed
        adam_m: First moments by parameter name (empty if not saved)
        adam_v: Second moments by parameter name
        adam_step: Optimizer step counter
        metadata: JSON-serializable extras
    """
    params: GmrParams
    seed: int = 0
    step: int = 0
    adam_m: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    adam_v: Dict[str, np.ndarray] = field(default_factory=OrderedDict)
    adam_step: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def has_optimizer_state(self) -> bool:
        return bool(self.adam_m)


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    """Serialize a checkpoint to its on-disk bytes."""
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict(ckpt.params.items())
    if ckpt.adam_m:
        for name in ckpt.params.names():
            tensors[_M_PREFIX + name] = np.asarray(ckpt.adam_m[name], dtype=np.float64)
        for name in ckpt.params.names():
            tensors[_V_PREFIX + name] = np.asarray(ckpt.adam_v[name], dtype=np.float64)

    header = {
        "version": CHECKPOINT_VERSION,
        "config": ckpt.params.config.to_dict(),
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in tensors.items()],
        "seed": int(ckpt.seed),
        "step": int(ckpt.step),
        "adam_step": int(ckpt.adam_step),
        "metadata": ckpt.metadata,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in tensors.values())
    return CHECKPOINT_MAGIC + struct.pack("<Q", len(header_bytes)) + header_bytes + blob


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> None:
    """Write a checkpoint file."""
    data = checkpoint_bytes(ckpt)
    with open(path, "wb") as f:
        f.write(data)
    logger.info(f"Wrote checkpoint at step {ckpt.step} to {path} ({len(data)} bytes)")


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read a checkpoint file.

    Raises:
        InvalidInputError: If the file is truncated, has a bad magic, or its tensors disagree with the config
    """
    with open(path, "rb") as f:
        data = f.read()

    prefix = len(CHECKPOINT_MAGIC) + 8
    if len(data) < prefix or data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"{path} is not a checkpoint file")
    (header_len,) = struct.unpack("<Q", data[len(CHECKPOINT_MAGIC):prefix])
    try:
        header = json.loads(data[prefix:prefix + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise InvalidInputError(f"{path} has a corrupt header: {e}") from e
    if header.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {header.get('version')}")

    offset = prefix + header_len
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(data):
            raise InvalidInputError(f"{path} is truncated at tensor {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
    if offset != len(data):
        raise InvalidInputError(f"{path} has {len(data) - offset} trailing bytes")

    config = GmrConfig.from_dict(header["config"])
    names = list(config.parameter_shapes())
    params = GmrParams(config, OrderedDict((name, tensors[name]) for name in names if name in tensors))
    adam_m = OrderedDict((name, tensors[_M_PREFIX + name]) for name in names if _M_PREFIX + name in tensors)
    adam_v = OrderedDict((name, tensors[_V_PREFIX + name]) for name in names if _V_PREFIX + name in tensors)
    if adam_m and (len(adam_m) != len(names) or len(adam_v) != len(names)):
        raise InvalidInputError(f"{path} has incomplete optimizer state")

    logger.debug(f"Loaded checkpoint from {path}: step {header['step']}, {params.num_parameters} parameters")
    return Checkpoint(
        params=params,
        seed=header["seed"],
        step=header["step"],
        adam_m=adam_m,
        adam_v=adam_v,
        adam_step=header["adam_step"],
        metadata=header.get("metadata", {}),
    )
