from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from iqjepa.errors import DataError
from iqjepa.storage.dataset import LABEL_DTYPE, TASKS, LabelNamesType
from iqjepa.storage.files import (
    PathType,
    read_array,
    read_json,
    require_keys,
    write_array,
    write_json,
)

FORMAT_VERSION = 1
VECTOR_DTYPE = "<f4"


@dataclass(eq=False)
class EmbeddingCache:
    vectors: np.ndarray
    labels: np.ndarray
    checkpoint_id: str
    label_names: LabelNamesType = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint16)
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 1:
            raise ValueError("embeddings must be a non-empty (N, D) matrix")
        if self.labels.shape != (self.vectors.shape[0], len(TASKS)):
            raise ValueError("labels must hold one (modulation, aoa) pair per row")
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embeddings contain non-finite values")


def write_embeddings(cache: EmbeddingCache, directory: PathType) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create {directory}: {e}") from e
    n, d = cache.vectors.shape
    write_array(directory / "vectors.bin", cache.vectors, VECTOR_DTYPE)
    write_array(directory / "labels.bin", cache.labels, LABEL_DTYPE)
    write_json(
        directory / "header.json",
        {
            "version": FORMAT_VERSION,
            "checkpoint_id": cache.checkpoint_id,
            "D": d,
            "N": n,
            "label_names": cache.label_names,
        },
    )
    return directory


def read_embeddings(directory: PathType) -> EmbeddingCache:
    directory = Path(directory)
    header_path = directory / "header.json"
    header = read_json(header_path)
    require_keys(header, ("checkpoint_id", "D", "N"), header_path)
    n, d = header["N"], header["D"]
    vectors = read_array(directory / "vectors.bin", VECTOR_DTYPE, n * d)
    labels = read_array(directory / "labels.bin", LABEL_DTYPE, n * len(TASKS))
    return EmbeddingCache(
        vectors=vectors.reshape(n, d),
        labels=labels.reshape(n, len(TASKS)),
        checkpoint_id=header["checkpoint_id"],
        label_names=header.get("label_names") or {},
    )
