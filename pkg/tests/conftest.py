import numpy as np
import torch
from iqjepa.model.masks import MaskGeometry, MaskSpec
from iqjepa.signal.synth import ChannelConfig, SyntheticDatasetSpec
from iqjepa.storage.dataset import IQDataset
from iqjepa.train.jepa import TrainConfig
from pytest import fixture


@fixture(autouse=True)
def _single_thread(monkeypatch):
    monkeypatch.setenv("WJEPA_THREADS", "1")
    torch.set_num_threads(1)


@fixture
def tiny_dataset() -> IQDataset:
    rng = np.random.default_rng(0)
    data = rng.uniform(-1, 1, size=(8, 2, 2, 16)).astype(np.float32)
    labels = np.stack([np.arange(8) % 2, np.arange(8) % 4], axis=1)
    names = {"modulation": ["BPSK", "QPSK"], "aoa": ["-90", "-30", "30", "90"]}
    return IQDataset(data, labels, label_names=names)


@fixture
def tiny_train_config() -> TrainConfig:
    return TrainConfig(
        epochs=1,
        batch_size=4,
        base_lr=1e-2,
        architecture="wjcnn-tiny",
        mask=MaskSpec(geometry=MaskGeometry.TIME, seed=0),
        log_every=1,
    )


@fixture
def small_synth_spec() -> SyntheticDatasetSpec:
    return SyntheticDatasetSpec(
        waveforms=2,
        aoa_classes=3,
        replicas=5,
        window=16,
        seed=1,
        channel=ChannelConfig(antennas=2),
    )
