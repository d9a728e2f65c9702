import csv
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np
from iqjepa.errors import DataError
from iqjepa.signal.grid import square_grid_factor
from iqjepa.storage.checkpoint import save_checkpoint
from iqjepa.storage.dataset import IQDataset
from iqjepa.storage.files import PathType
from iqjepa.train.jepa import JEPAState, LossReport, TrainConfig, grid_batch, train_step

logger = logging.getLogger(__name__)

METRICS_COLUMNS = ("step", "epoch", "loss", "masked_cells", "tau", "lr", "wall_ms")


@dataclass(frozen=True)
class PretrainResult:
    checkpoint: Path
    checkpoint_id: str
    metrics: Path
    reports: List[LossReport]


def epoch_order(seed: int, epoch: int, count: int) -> np.ndarray:
    return np.random.default_rng([seed, epoch]).permutation(count)


def batches_per_epoch(count: int, batch_size: int) -> int:
    return math.ceil(count / batch_size)


def pretrain(
    config: TrainConfig,
    dataset: IQDataset,
    out_dir: PathType,
) -> PretrainResult:
    """Train student, predictor and mask token; save the student encoder."""
    if len(dataset) == 0:
        raise ValueError("cannot pretrain on an empty dataset")
    out_dir = Path(out_dir)
    factor = config.upsampling or square_grid_factor(dataset.antennas, dataset.window)
    per_epoch = batches_per_epoch(len(dataset), config.batch_size)
    total_steps = config.epochs * per_epoch
    state = JEPAState.create(config, total_steps, antennas=dataset.antennas)
    logger.info(
        "pretraining %s on %d samples: %d epochs x %d batches, mask %s",
        config.architecture,
        len(dataset),
        config.epochs,
        per_epoch,
        config.mask.geometry.value,
    )

    metrics_path = out_dir / "metrics.csv"
    reports = []
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        f = open(metrics_path, "w", newline="", encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot write {metrics_path}: {e}") from e
    with f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for epoch in range(config.epochs):
            order = epoch_order(config.seed, epoch, len(dataset))
            for b in range(per_epoch):
                index = order[b * config.batch_size : (b + 1) * config.batch_size]
                batch = grid_batch(dataset.data[index], factor)
                start = time.perf_counter()
                state, report = train_step(
                    state,
                    batch,
                    config.mask,
                    first_index=state.step * config.batch_size,
                )
                wall_ms = (time.perf_counter() - start) * 1e3
                if not config.record_wall_time:
                    wall_ms = 0.0
                writer.writerow(
                    (
                        report.step,
                        epoch,
                        repr(report.loss),
                        report.masked_cells,
                        repr(report.tau),
                        repr(report.lr),
                        f"{wall_ms:.3f}",
                    )
                )
                reports.append(report)
                if report.step % config.log_every == 0:
                    logger.info(
                        "step %d/%d epoch %d loss %.6f tau %.6f lr %.3e",
                        report.step,
                        total_steps,
                        epoch,
                        report.loss,
                        report.tau,
                        report.lr,
                    )

    ckpt_id = save_checkpoint(state.student, out_dir)
    return PretrainResult(
        checkpoint=out_dir,
        checkpoint_id=ckpt_id,
        metrics=metrics_path,
        reports=reports,
    )
