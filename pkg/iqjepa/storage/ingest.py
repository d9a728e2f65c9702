"""Conversion of raw interleaved I/Q captures into dataset directories.

The raw file holds little-endian float32 values, antenna after antenna, each
antenna stream as I, Q, I, Q, ... A JSON sidecar describes it:
``{"antennas": A, "sample_rate": fs, "labels": [modulation, aoa]}`` with
optional ``label_names``.
"""
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from iqjepa.errors import DataError
from iqjepa.signal.grid import (
    DEFAULT_ANTENNAS,
    DEFAULT_WINDOW,
    IQRecording,
    segment_recording,
    unit_max_normalize,
)
from iqjepa.storage.dataset import IQDataset, write_dataset
from iqjepa.storage.files import PathType, read_json, require_keys

logger = logging.getLogger(__name__)

RAW_DTYPE = "<f4"


def sidecar_path(path: PathType) -> Path:
    return Path(path).with_suffix(".json")


def read_sidecar(path: PathType) -> Dict[str, Any]:
    meta = read_json(path)
    require_keys(meta, ("antennas", "sample_rate"), path)
    if not isinstance(meta["antennas"], int) or meta["antennas"] < 1:
        raise DataError(f"{path}: antennas must be a positive integer")
    if not isinstance(meta["sample_rate"], (int, float)) or meta["sample_rate"] <= 0:
        raise DataError(f"{path}: sample_rate must be positive")
    labels = meta.get("labels")
    if labels is not None and (not isinstance(labels, list) or len(labels) != 2):
        raise DataError(f"{path}: labels must be a [modulation, aoa] pair")
    return meta


def read_raw_recording(
    path: PathType,
    meta_path: Optional[PathType] = None,
) -> Tuple[IQRecording, Dict[str, Any]]:
    path = Path(path)
    meta_path = Path(meta_path) if meta_path else sidecar_path(path)
    meta = read_sidecar(meta_path)
    antennas = meta["antennas"]
    try:
        raw = np.fromfile(path, dtype=RAW_DTYPE)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if path.stat().st_size % np.dtype(RAW_DTYPE).itemsize != 0:
        raise DataError(f"{path}: truncated float32 stream")
    if raw.size == 0 or raw.size % (2 * antennas) != 0:
        raise DataError(
            f"{path}: {raw.size} values do not split into {antennas} antennas "
            "of complex samples"
        )
    streams = raw.reshape(antennas, -1, 2)
    data = np.ascontiguousarray(np.moveaxis(streams, -1, 0), dtype=np.float32)
    labels = tuple(int(v) for v in meta["labels"]) if meta.get("labels") else None
    try:
        recording = IQRecording(
            data=data, sample_rate=meta["sample_rate"], labels=labels
        )
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e
    return recording, meta


def tile_antennas(recording: IQRecording, antennas: int) -> IQRecording:
    if recording.antennas != 1:
        raise ValueError("only single-antenna recordings can be tiled")
    if antennas < 1:
        raise ValueError("antenna count must be positive")
    return IQRecording(
        data=np.repeat(recording.data, antennas, axis=1),
        sample_rate=recording.sample_rate,
        labels=recording.labels,
    )


def ingest(
    path: PathType,
    out_dir: PathType,
    meta_path: Optional[PathType] = None,
    window: int = DEFAULT_WINDOW,
    stride: Optional[int] = None,
    tile_to: Optional[int] = DEFAULT_ANTENNAS,
    test_fraction: float = 0.0,
) -> Dict[str, IQDataset]:
    """Segment, normalize and write one capture.

    Single-antenna captures are tiled to ``tile_to`` rows. The tail windows form
    the test split.
    """
    if not 0 <= test_fraction < 1:
        raise ValueError("test fraction must be in [0, 1)")
    recording, meta = read_raw_recording(path, meta_path)
    tiled_from = None
    if tile_to is not None and recording.antennas == 1 and tile_to > 1:
        tiled_from = 1
        recording = tile_antennas(recording, tile_to)
        logger.info("tiled single-antenna capture %s to %d rows", path, tile_to)
    try:
        samples = [
            unit_max_normalize(s)
            for s in segment_recording(recording, window=window, stride=stride)
        ]
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e
    if not samples:
        raise DataError(f"{path}: no non-zero windows")
    n_test = int(math.floor(test_fraction * len(samples) + 0.5))
    if n_test >= len(samples):
        raise DataError(f"{path}: test fraction leaves no training windows")
    cut = len(samples) - n_test
    parts = {"train": samples[:cut], "test": samples[cut:]}
    splits = {
        name: IQDataset.from_samples(
            items,
            label_names=meta.get("label_names"),
            sample_rate=recording.sample_rate,
            tiled_from=tiled_from,
        )
        for name, items in parts.items()
        if items
    }
    spec = {
        "source": str(path),
        "window": window,
        "stride": stride or window,
        "tile_antennas": tile_to,
        "test_fraction": test_fraction,
    }
    write_dataset(splits, out_dir, spec=spec)
    return splits
