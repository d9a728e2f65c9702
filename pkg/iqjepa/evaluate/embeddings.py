import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
import torch
from iqjepa.model.encoder import Encoder
from iqjepa.signal.grid import UNLABELED, square_grid_factor
from iqjepa.storage.dataset import TASKS, IQDataset
from iqjepa.storage.embedding import EmbeddingCache
from iqjepa.train.jepa import grid_batch

logger = logging.getLogger(__name__)

EXTRACT_BATCH_SIZE = 64


class Task(str, Enum):
    MODULATION = "modulation"
    AOA = "aoa"


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    vectors: np.ndarray
    labels: np.ndarray
    checkpoint_id: str = ""
    num_classes: Optional[int] = None

    def __post_init__(self):
        vectors = np.asarray(self.vectors)
        labels = np.asarray(self.labels, dtype=np.int64)
        if vectors.ndim != 2 or vectors.shape[0] < 1:
            raise ValueError("embedding set must be a non-empty (N, D) matrix")
        if labels.shape != (vectors.shape[0],):
            raise ValueError("one label per embedding is required")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("embeddings contain non-finite values")
        if labels.min() < 0:
            raise ValueError("label ids must be non-negative")
        if self.num_classes is not None and labels.max() >= self.num_classes:
            raise ValueError("label id outside the task's classes")
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def classes(self) -> int:
        if self.num_classes is not None:
            return self.num_classes
        return int(self.labels.max()) + 1

    def subset(self, index: np.ndarray) -> "EmbeddingSet":
        return EmbeddingSet(
            self.vectors[index],
            self.labels[index],
            self.checkpoint_id,
            self.num_classes,
        )


@torch.no_grad()
def extract_embeddings(
    encoder: Encoder,
    dataset: IQDataset,
    factor: Optional[int] = None,
    batch_size: int = EXTRACT_BATCH_SIZE,
) -> np.ndarray:
    """Global-average-pooled dense latents of every sample, in dataset order."""
    factor = factor or square_grid_factor(dataset.antennas, dataset.window)
    dtype = next(encoder.parameters()).dtype
    encoder.eval()
    rows = []
    for start in range(0, len(dataset), batch_size):
        x = grid_batch(dataset.data[start : start + batch_size], factor).to(dtype)
        latent = encoder.dense_forward(x)
        rows.append(latent.mean(dim=(2, 3)).cpu().numpy())
    vectors = np.concatenate(rows).astype(np.float32)
    logger.debug("extracted %d embeddings of width %d", *vectors.shape)
    return vectors


def extract_cache(
    encoder: Encoder,
    dataset: IQDataset,
    checkpoint_id: str,
    factor: Optional[int] = None,
) -> EmbeddingCache:
    return EmbeddingCache(
        vectors=extract_embeddings(encoder, dataset, factor),
        labels=dataset.labels,
        checkpoint_id=checkpoint_id,
        label_names=dataset.label_names,
    )


def task_set(cache: EmbeddingCache, task: Task) -> EmbeddingSet:
    """Rows labelled for ``task``; unlabelled rows are left out."""
    task = Task(task)
    labels = cache.labels[:, TASKS.index(task.value)].astype(np.int64)
    keep = labels != UNLABELED
    if not np.any(keep):
        raise ValueError(f"no samples carry a {task.value} label")
    names = cache.label_names.get(task.value)
    return EmbeddingSet(
        vectors=cache.vectors[keep],
        labels=labels[keep],
        checkpoint_id=cache.checkpoint_id,
        num_classes=len(names) if names else None,
    )
