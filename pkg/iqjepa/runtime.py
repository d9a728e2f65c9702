import logging
import os
from typing import Optional

import torch

logger = logging.getLogger(__name__)

THREADS_ENV = "WJEPA_THREADS"


def get_thread_count(default: Optional[int] = None) -> int:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return default or max(1, torch.get_num_threads())
    try:
        count = int(value)
    except ValueError as e:
        raise ValueError(f"{THREADS_ENV} must be an integer, got '{value}'") from e
    if count < 1:
        raise ValueError(f"{THREADS_ENV} must be positive")
    return count


def configure_torch(seed: Optional[int] = None) -> None:
    threads = get_thread_count()
    torch.set_num_threads(threads)
    torch.use_deterministic_algorithms(True)
    if seed is not None:
        torch.manual_seed(seed)
    logger.debug("torch configured with %d threads", threads)
