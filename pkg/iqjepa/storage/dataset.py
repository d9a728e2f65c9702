"""Dataset directories on disk.

A dataset directory holds ``manifest.json`` and one sub-directory per split.
Each split stores ``header.json``, ``data.bin`` (little-endian float32, one
(2, A, T) sample after the other, I rows before Q rows) and ``labels.bin``
(two little-endian uint16 per sample: modulation id, AoA id).
"""
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence

import numpy as np
from iqjepa.errors import DataError
from iqjepa.signal.grid import IQ_CHANNELS, UNLABELED, IQSample
from iqjepa.storage.files import (
    PathType,
    read_array,
    read_json,
    require_keys,
    write_array,
    write_json,
)

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DATA_DTYPE = "<f4"
LABEL_DTYPE = "<u2"
TASKS = ("modulation", "aoa")
SPLITS = ("train", "test")

LabelNamesType = Dict[str, List[str]]


@dataclass(eq=False)
class IQDataset:
    data: np.ndarray
    labels: np.ndarray
    label_names: LabelNamesType = field(default_factory=dict)
    sample_rate: float = 1.0
    tiled_from: Optional[int] = None

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint16)
        if self.data.ndim != 4 or self.data.shape[1] != IQ_CHANNELS:
            raise ValueError(
                f"expected data of shape (N, 2, A, T), got {self.data.shape}"
            )
        if self.labels.shape != (self.data.shape[0], len(TASKS)):
            raise ValueError("labels must hold one (modulation, aoa) pair per sample")

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[IQSample],
        label_names: Optional[LabelNamesType] = None,
        sample_rate: float = 1.0,
        tiled_from: Optional[int] = None,
    ) -> "IQDataset":
        if not samples:
            raise ValueError("a dataset needs at least one sample")
        data = np.stack([s.tensor for s in samples])
        labels = np.array(
            [
                s.labels if s.labels is not None else (UNLABELED, UNLABELED)
                for s in samples
            ],
            dtype=np.uint16,
        )
        return cls(data, labels, dict(label_names or {}), sample_rate, tiled_from)

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def antennas(self) -> int:
        return self.data.shape[2]

    @property
    def window(self) -> int:
        return self.data.shape[3]

    def task_labels(self, task: str) -> np.ndarray:
        return self.labels[:, TASKS.index(task)]

    def class_counts(self) -> Dict[str, Dict[str, int]]:
        counts = {}
        for task in TASKS:
            counter = Counter(int(v) for v in self.task_labels(task))
            counts[task] = {str(k): counter[k] for k in sorted(counter)}
        return counts

    def samples(self) -> Iterator[IQSample]:
        for tensor, labels in zip(self.data, self.labels):
            yield IQSample(tensor=tensor, labels=tuple(int(v) for v in labels))

    def header(self) -> Dict[str, Any]:
        return {
            "version": FORMAT_VERSION,
            "count": len(self),
            "channels": IQ_CHANNELS,
            "antennas": self.antennas,
            "window": self.window,
            "label_names": self.label_names,
            "sample_rate": self.sample_rate,
            "tiled_from": self.tiled_from,
        }


def write_split(dataset: IQDataset, directory: PathType) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create {directory}: {e}") from e
    write_array(directory / "data.bin", dataset.data, DATA_DTYPE)
    write_array(directory / "labels.bin", dataset.labels, LABEL_DTYPE)
    write_json(directory / "header.json", dataset.header())
    return directory


def read_split(directory: PathType) -> IQDataset:
    directory = Path(directory)
    header_path = directory / "header.json"
    header = read_json(header_path)
    require_keys(
        header,
        ("version", "count", "channels", "antennas", "window"),
        header_path,
    )
    if header["version"] != FORMAT_VERSION:
        raise DataError(f"{header_path}: unsupported version {header['version']}")
    if header["channels"] != IQ_CHANNELS:
        raise DataError(f"{header_path}: expected {IQ_CHANNELS} channels")
    n, a, t = header["count"], header["antennas"], header["window"]
    data = read_array(directory / "data.bin", DATA_DTYPE, n * IQ_CHANNELS * a * t)
    labels = read_array(directory / "labels.bin", LABEL_DTYPE, n * len(TASKS))
    return IQDataset(
        data=data.reshape(n, IQ_CHANNELS, a, t),
        labels=labels.reshape(n, len(TASKS)),
        label_names=header.get("label_names") or {},
        sample_rate=header.get("sample_rate", 1.0),
        tiled_from=header.get("tiled_from"),
    )


def write_dataset(
    splits: Dict[str, IQDataset],
    directory: PathType,
    spec: Optional[Dict[str, Any]] = None,
) -> Path:
    directory = Path(directory)
    for name, split in splits.items():
        write_split(split, directory / name)
    manifest = {
        "version": FORMAT_VERSION,
        "spec": spec or {},
        "splits": {name: len(split) for name, split in splits.items()},
        "class_counts": {name: split.class_counts() for name, split in splits.items()},
    }
    write_json(directory / "manifest.json", manifest)
    logger.info(
        "wrote dataset %s (%s)",
        directory,
        ", ".join(f"{name}: {len(split)}" for name, split in splits.items()),
    )
    return directory


def read_manifest(directory: PathType) -> Dict[str, Any]:
    path = Path(directory) / "manifest.json"
    manifest = read_json(path)
    require_keys(manifest, ("version", "splits"), path)
    return manifest


def read_dataset(directory: PathType, split: str = "train") -> IQDataset:
    directory = Path(directory)
    manifest = read_manifest(directory)
    if split not in manifest["splits"]:
        raise DataError(f"{directory}: no '{split}' split")
    dataset = read_split(directory / split)
    if len(dataset) != manifest["splits"][split]:
        raise DataError(f"{directory}: '{split}' split does not match its manifest")
    return dataset
