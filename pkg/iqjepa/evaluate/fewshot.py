import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

import numpy as np
from iqjepa.evaluate.embeddings import EmbeddingSet
from iqjepa.evaluate.probe import DEFAULT_K, ProbeConfig, knn_classify, linear_probe

logger = logging.getLogger(__name__)

DEFAULT_SHOTS = (1, 100)
DEFAULT_SEEDS = 3


class ProbeMethod(str, Enum):
    LINEAR = "linear"
    KNN = "knn"


@dataclass(frozen=True)
class ShotProtocol:
    shots: Tuple[int, ...] = DEFAULT_SHOTS
    seeds: int = DEFAULT_SEEDS

    def __post_init__(self):
        object.__setattr__(self, "shots", tuple(int(n) for n in self.shots))
        if not self.shots or min(self.shots) < 1:
            raise ValueError("shot counts must be positive")
        if self.seeds < 1:
            raise ValueError("need at least one evaluation seed")


@dataclass(frozen=True)
class ShotResult:
    shots: int
    accuracies: Tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        if len(set(self.accuracies)) == 1:
            return 0.0
        return float(np.std(self.accuracies))


def sample_shots(
    labels: np.ndarray,
    classes: int,
    shots: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Pick ``shots`` distinct indices per class; indices come back sorted."""
    candidates = [np.flatnonzero(labels == c) for c in range(classes)]
    deficient = [c for c, idx in enumerate(candidates) if len(idx) < shots]
    if deficient:
        raise ValueError(
            f"classes with fewer than {shots} examples: "
            f"{', '.join(str(c) for c in deficient)}"
        )
    chosen = [rng.choice(idx, size=shots, replace=False) for idx in candidates]
    return np.sort(np.concatenate(chosen))


def run_method(
    method: ProbeMethod,
    train: EmbeddingSet,
    test: EmbeddingSet,
    probe: ProbeConfig = ProbeConfig(),
    k: int = DEFAULT_K,
) -> float:
    method = ProbeMethod(method)
    if method == ProbeMethod.LINEAR:
        return linear_probe(train, test, probe)
    return knn_classify(train, test, min(k, len(train)))


def few_shot_eval(
    train: EmbeddingSet,
    test: EmbeddingSet,
    protocol: ShotProtocol,
    method: ProbeMethod,
    probe: ProbeConfig = ProbeConfig(),
    k: int = DEFAULT_K,
) -> List[ShotResult]:
    results = []
    for shots in protocol.shots:
        accuracies = []
        for seed in range(protocol.seeds):
            rng = np.random.default_rng([seed, shots])
            index = sample_shots(train.labels, train.classes, shots, rng)
            accuracies.append(run_method(method, train.subset(index), test, probe, k))
        result = ShotResult(shots, tuple(accuracies))
        logger.info(
            "%s %d-shot: %.4f +- %.4f over %d seeds",
            ProbeMethod(method).value,
            shots,
            result.mean,
            result.std,
            protocol.seeds,
        )
        results.append(result)
    return results
