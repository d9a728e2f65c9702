"""Encoder checkpoints: ``manifest.json`` plus ``params.bin``.

``params.bin`` concatenates the raw little-endian tensors in manifest order.
Only parameters and batch-norm running statistics are stored.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch
from iqjepa.errors import DataError
from iqjepa.model.encoder import Encoder, EncoderConfig
from iqjepa.model.layers import LayerSpec
from iqjepa.storage.files import (
    PathType,
    read_array,
    read_json,
    require_keys,
    sha256_file,
    write_array,
    write_json,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
CHECKPOINT_ID_LENGTH = 16
_DTYPES = {torch.float32: "float32", torch.float64: "float64"}
_NUMPY_DTYPES = {"float32": "<f4", "float64": "<f8"}


def _stored_tensors(encoder: Encoder) -> List[Tuple[str, torch.Tensor]]:
    # num_batches_tracked is bookkeeping, not model state
    return [
        (name, t)
        for name, t in encoder.state_dict().items()
        if not name.endswith("num_batches_tracked")
    ]


def save_checkpoint(encoder: Encoder, directory: PathType) -> str:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create {directory}: {e}") from e
    entries, chunks, offset = [], [], 0
    for name, tensor in _stored_tensors(encoder):
        dtype = _DTYPES.get(tensor.dtype)
        if dtype is None:
            raise ValueError(f"cannot store tensor '{name}' of dtype {tensor.dtype}")
        array = tensor.detach().cpu().numpy().astype(_NUMPY_DTYPES[dtype])
        entries.append(
            {"name": name, "shape": list(array.shape), "dtype": dtype, "offset": offset}
        )
        chunks.append(array.reshape(-1).view(np.uint8))
        offset += array.nbytes
    payload = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.uint8)
    write_array(directory / "params.bin", payload, "u1")
    manifest = {
        "format_version": FORMAT_VERSION,
        "architecture": encoder.config.architecture,
        "encoder_config": encoder.config.to_dict(),
        "layer_specs": [s.to_dict() for s in encoder.specs],
        "latent_channels": encoder.latent_channels,
        "total_stride": encoder.total_stride,
        "tensors": entries,
    }
    write_json(directory / "manifest.json", manifest)
    ckpt_id = checkpoint_id(directory)
    logger.info("saved checkpoint %s to %s", ckpt_id, directory)
    return ckpt_id


def checkpoint_id(directory: PathType) -> str:
    return sha256_file(Path(directory) / "params.bin")[:CHECKPOINT_ID_LENGTH]


def read_checkpoint_manifest(directory: PathType) -> Dict[str, Any]:
    path = Path(directory) / "manifest.json"
    manifest = read_json(path)
    require_keys(
        manifest,
        ("format_version", "encoder_config", "layer_specs", "tensors"),
        path,
    )
    if manifest["format_version"] != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format {manifest['format_version']}")
    return manifest


def load_checkpoint(
    directory: PathType,
    dtype: Optional[torch.dtype] = None,
) -> Encoder:
    directory = Path(directory)
    manifest = read_checkpoint_manifest(directory)
    try:
        config = EncoderConfig(**manifest["encoder_config"])
        specs = [LayerSpec.from_dict(s) for s in manifest["layer_specs"]]
    except (TypeError, ValueError, KeyError) as e:
        raise DataError(f"{directory}: invalid architecture description: {e}") from e
    entries = manifest["tensors"]
    for entry in entries:
        if entry.get("dtype") not in _NUMPY_DTYPES:
            raise DataError(
                f"{directory}: unsupported tensor dtype {entry.get('dtype')}"
            )
    wide = bool(entries) and entries[0]["dtype"] == "float64"
    stored = torch.float64 if wide else torch.float32
    encoder = Encoder(config, specs).to(stored)
    size = 0
    for entry in entries:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        itemsize = np.dtype(_NUMPY_DTYPES[entry["dtype"]]).itemsize
        size = max(size, entry["offset"] + n * itemsize)
    raw = read_array(directory / "params.bin", "u1", size)
    expected = dict(_stored_tensors(encoder))
    if {e["name"] for e in entries} != expected.keys():
        raise DataError(f"{directory}: tensors do not match the architecture")
    state = encoder.state_dict()
    for entry in entries:
        np_dtype = np.dtype(_NUMPY_DTYPES[entry["dtype"]])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        array = raw[start : start + count * np_dtype.itemsize].view(np_dtype)
        tensor = torch.from_numpy(array.reshape(entry["shape"]).copy())
        if tuple(tensor.shape) != tuple(expected[entry["name"]].shape):
            raise DataError(f"{directory}: shape mismatch for '{entry['name']}'")
        state[entry["name"]] = tensor
    encoder.load_state_dict(state)
    return encoder.to(dtype or stored)
