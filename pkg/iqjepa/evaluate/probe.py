"""Classifiers on frozen embeddings."""
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import torch
from iqjepa.evaluate.embeddings import EmbeddingSet
from iqjepa.train.schedule import lr_schedule
from torch.nn import functional as F

DEFAULT_K = 5


@dataclass(frozen=True)
class ProbeConfig:
    iterations: int = 500
    lr: float = 0.1
    l2: float = 1e-4

    def __post_init__(self):
        if self.iterations < 1 or self.lr <= 0 or self.l2 < 0:
            raise ValueError("invalid probe configuration")


def standardize(
    train: np.ndarray, test: np.ndarray
) -> Tuple[torch.Tensor, torch.Tensor]:
    x = torch.from_numpy(np.asarray(train, dtype=np.float64))
    y = torch.from_numpy(np.asarray(test, dtype=np.float64))
    mean = x.mean(dim=0)
    std = x.std(dim=0, unbiased=False)
    std = torch.where(std > 0, std, torch.ones_like(std))
    return (x - mean) / std, (y - mean) / std


def fit_linear_probe(
    x: torch.Tensor,
    labels: torch.Tensor,
    classes: int,
    cfg: ProbeConfig,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Full-batch multinomial logistic regression, zero-initialized."""
    w = torch.zeros(x.shape[1], classes, dtype=x.dtype, requires_grad=True)
    b = torch.zeros(classes, dtype=x.dtype, requires_grad=True)
    optimizer = torch.optim.SGD([w, b], lr=cfg.lr)
    for step in range(cfg.iterations):
        for group in optimizer.param_groups:
            group["lr"] = lr_schedule(step, cfg.iterations, cfg.lr)
        optimizer.zero_grad()
        loss = F.cross_entropy(x @ w + b, labels) + cfg.l2 * (w * w).sum()
        loss.backward()
        optimizer.step()
    return w.detach(), b.detach()


def linear_probe(
    train: EmbeddingSet,
    test: EmbeddingSet,
    cfg: ProbeConfig = ProbeConfig(),
) -> float:
    if len(np.unique(train.labels)) < 2:
        raise ValueError("linear probe needs at least two classes in the train set")
    classes = max(train.classes, test.classes)
    x_train, x_test = standardize(train.vectors, test.vectors)
    w, b = fit_linear_probe(x_train, torch.from_numpy(train.labels), classes, cfg)
    predicted = (x_test @ w + b).argmax(dim=1).numpy()
    return float(np.mean(predicted == test.labels))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def knn_predict(
    train: EmbeddingSet, test: EmbeddingSet, k: int = DEFAULT_K
) -> np.ndarray:
    """Cosine k-NN vote; ties go to the larger summed similarity, then the lower id."""
    if len(train) == 0 or len(test) == 0:
        raise ValueError("k-NN needs non-empty train and test sets")
    if not 1 <= k <= len(train):
        raise ValueError(f"k must be in [1, {len(train)}]")
    sims = _unit_rows(test.vectors) @ _unit_rows(train.vectors).T
    classes = max(train.classes, test.classes)
    predicted = np.empty(len(test), dtype=np.int64)
    for i, row in enumerate(sims):
        nearest = np.argsort(-row, kind="stable")[:k]
        votes = np.bincount(train.labels[nearest], minlength=classes)
        weight = np.bincount(
            train.labels[nearest], weights=row[nearest], minlength=classes
        )
        # lexsort keys run from least to most significant
        order = np.lexsort((np.arange(classes), -weight, -votes))
        predicted[i] = order[0]
    return predicted


def knn_classify(train: EmbeddingSet, test: EmbeddingSet, k: int = DEFAULT_K) -> float:
    return float(np.mean(knn_predict(train, test, k) == test.labels))
