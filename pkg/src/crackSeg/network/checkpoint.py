"""
CRKSEG01 checkpoint files.

Layout (little-endian): 8-byte magic "CRKSEG01", u32 tensor count, then per tensor a u16 name
length, the UTF-8 name, a u8 rank, rank x u32 dims and numel x float32 row-major values.
Optimizer state, when present, is stored under "optim." names next to the model tensors.
"""
import os
import struct
from collections import OrderedDict
from typing import TYPE_CHECKING, Mapping, Optional

import numpy as np

from crackSeg.config import config
from crackSeg.errors import CheckpointError
from crackSeg.network.unet import Model

if TYPE_CHECKING:
    from crackSeg.optim.adamw import AdamW

OPTIM_PREFIX = "optim."

_HEADER = struct.Struct("<8sI")
_NAME_LENGTH = struct.Struct("<H")
_RANK = struct.Struct("<B")


def encoded_size(tensors: Mapping[str, np.ndarray]) -> int:
    """Exact byte size of the file `write_tensors` produces for `tensors`."""
    total = _HEADER.size
    for name, array in tensors.items():
        total += _NAME_LENGTH.size + len(name.encode("utf-8")) + _RANK.size + 4 * array.ndim + 4 * array.size
    return total


def write_tensors(path: str, tensors: Mapping[str, np.ndarray]) -> int:
    """
    Write named arrays as float32.

    Args:
        path (str): Destination file; parent directories are created.
        tensors (Mapping[str, np.ndarray]): Name -> array, written in iteration order.

    Returns:
        int: Bytes written.
    """
    parts = [_HEADER.pack(config.CHECKPOINT_MAGIC, len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF or np.ndim(array) > 0xFF:
            raise CheckpointError(f"Tensor {name} cannot be encoded (name too long or rank too high)")
        array = np.asarray(array)
        parts.append(_NAME_LENGTH.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_RANK.pack(array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(np.ascontiguousarray(array, dtype="<f4").tobytes())
    payload = b"".join(parts)

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as file:
        file.write(payload)
    return len(payload)


def read_tensors(path: str) -> "OrderedDict[str, np.ndarray]":
    """Read every named float32 array of a checkpoint file, in file order."""
    try:
        with open(path, "rb") as file:
            payload = file.read()
    except OSError as e:
        config.logger.error(f"Cannot read checkpoint {path}: {e}")
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    try:
        magic, count = _HEADER.unpack_from(payload, 0)
        if magic != config.CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint (magic {magic!r})")
        offset = _HEADER.size
        tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for _ in range(count):
            (name_length,) = _NAME_LENGTH.unpack_from(payload, offset)
            offset += _NAME_LENGTH.size
            name = payload[offset : offset + name_length].decode("utf-8")
            offset += name_length
            (rank,) = _RANK.unpack_from(payload, offset)
            offset += _RANK.size
            shape = struct.unpack_from(f"<{rank}I", payload, offset)
            offset += 4 * rank
            numel = int(np.prod(shape, dtype=np.int64))
            if offset + 4 * numel > len(payload):
                raise CheckpointError(f"{path} is truncated inside tensor {name}")
            tensors[name] = np.frombuffer(payload, dtype="<f4", count=numel, offset=offset).reshape(shape).astype(np.float32)
            offset += 4 * numel
    except (struct.error, UnicodeDecodeError) as e:
        config.logger.error(f"Corrupt checkpoint {path}: {e}")
        raise CheckpointError(f"Corrupt checkpoint {path}: {e}") from e
    except CheckpointError as e:
        config.logger.error(str(e))
        raise
    if offset != len(payload):
        message = f"{path} has {len(payload) - offset} trailing bytes"
        config.logger.error(message)
        raise CheckpointError(message)
    return tensors


def model_tensors(model: Model) -> "OrderedDict[str, np.ndarray]":
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, parameter in model.parameters.items():
        tensors[name] = parameter.data
    for name, buffer in model.buffers.items():
        tensors[name] = buffer.data
    return tensors


def save_checkpoint(model: Model, path: str, optimizer: Optional["AdamW"] = None) -> int:
    """
    Save parameters and batch-norm buffers (and optimizer state when given).

    Args:
        model (Model): Model to save.
        path (str): Destination file.
        optimizer (AdamW, optional): Optimizer whose moments and step counter are stored too.

    Returns:
        int: Bytes written.
    """
    tensors = model_tensors(model)
    if optimizer is not None:
        tensors.update(optimizer.state_tensors(prefix=OPTIM_PREFIX))
    written = write_tensors(path, tensors)
    config.logger.info(f"Saved checkpoint {path} ({len(tensors)} tensors, {written} bytes)")
    return written


def load_checkpoint(
    model: Model, path: str, optimizer: Optional["AdamW"] = None, prefix: Optional[str] = None
) -> None:
    """
    Load tensors by name into `model` (and `optimizer`).

    Every model tensor (restricted to names starting with `prefix`, if given) must be present
    with a matching shape; with no prefix, extra non-optimizer tensors in the file are also an
    error. Nothing is modified unless every check passes.

    Args:
        model (Model): Model to load into.
        path (str): Checkpoint file.
        optimizer (AdamW, optional): Receives the stored optimizer state.
        prefix (str, optional): Only load model tensors under this name prefix (e.g. "encoder.").

    Raises:
        CheckpointError: Unreadable file, or the first missing / mis-shaped / unexpected name.
    """
    stored = read_tensors(path)
    targets = {
        name: array for name, array in model_tensors(model).items() if prefix is None or name.startswith(prefix)
    }

    for name, array in targets.items():
        if name not in stored:
            _mismatch(path, f"missing tensor {name}")
        if stored[name].shape != array.shape:
            _mismatch(path, f"tensor {name} has shape {stored[name].shape}, model expects {array.shape}")
    if prefix is None:
        for name in stored:
            if name not in targets and not name.startswith(OPTIM_PREFIX):
                _mismatch(path, f"unexpected tensor {name}")

    if optimizer is not None:
        optimizer.load_state_tensors(
            {name: array for name, array in stored.items() if name.startswith(OPTIM_PREFIX)}, prefix=OPTIM_PREFIX
        )
    for name, array in targets.items():
        array[...] = stored[name]
    config.logger.info(f"Loaded {len(targets)} tensors from {path}")


def save_training_state(model: Model, optimizer: "AdamW", path: str) -> int:
    """Checkpoint that also resumes the optimizer: moments as "optim.<p>.m/v", step as "optim.t" / "optim.t_high"."""
    return save_checkpoint(model, path, optimizer=optimizer)


def load_training_state(model: Model, optimizer: "AdamW", path: str) -> None:
    load_checkpoint(model, path, optimizer=optimizer)


def _mismatch(path: str, detail: str) -> None:
    message = f"Checkpoint {path} does not match the model: {detail}"
    config.logger.error(message)
    raise CheckpointError(message)
