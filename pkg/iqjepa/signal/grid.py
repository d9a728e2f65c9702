import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

IQ_CHANNELS = 2
UNLABELED = 0xFFFF
DEFAULT_ANTENNAS = 4
DEFAULT_WINDOW = 256
DEFAULT_UPSAMPLING = 64

LabelsType = Tuple[int, int]


def _validate_labels(labels: Optional[LabelsType]) -> None:
    if labels is None:
        return
    if len(labels) != 2:
        raise ValueError("labels must be a (modulation, aoa) pair")
    for label in labels:
        if not 0 <= int(label) <= UNLABELED:
            raise ValueError("label id out of range")


def _validate_iq_tensor(tensor: np.ndarray) -> None:
    if tensor.ndim != 3 or tensor.shape[0] != IQ_CHANNELS:
        raise ValueError(f"expected shape (2, A, T), got {tensor.shape}")
    if tensor.shape[1] < 1 or tensor.shape[2] < 1:
        raise ValueError("antenna and time dimensions must be positive")
    if not np.all(np.isfinite(tensor)):
        raise ValueError("tensor contains non-finite values")


@dataclass(frozen=True, eq=False)
class IQRecording:
    data: np.ndarray
    sample_rate: float = 1.0
    labels: Optional[LabelsType] = None

    def __post_init__(self):
        _validate_iq_tensor(self.data)
        _validate_labels(self.labels)
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")

    @classmethod
    def from_complex(
        cls,
        streams: np.ndarray,
        sample_rate: float = 1.0,
        labels: Optional[LabelsType] = None,
    ) -> "IQRecording":
        streams = np.atleast_2d(streams)
        data = np.stack([streams.real, streams.imag]).astype(np.float32)
        return cls(data=data, sample_rate=sample_rate, labels=labels)

    @property
    def antennas(self) -> int:
        return self.data.shape[1]

    @property
    def samples_per_antenna(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, eq=False)
class IQSample:
    tensor: np.ndarray
    labels: Optional[LabelsType] = None

    def __post_init__(self):
        _validate_iq_tensor(self.tensor)
        _validate_labels(self.labels)

    @property
    def antennas(self) -> int:
        return self.tensor.shape[1]

    @property
    def window(self) -> int:
        return self.tensor.shape[2]

    def to_complex(self) -> np.ndarray:
        return self.tensor[0].astype(np.float64) + 1j * self.tensor[1]


@dataclass(frozen=True, eq=False)
class GridTensor:
    tensor: np.ndarray
    factor: int

    def __post_init__(self):
        _validate_iq_tensor(self.tensor)
        if self.factor < 1 or self.tensor.shape[1] % self.factor != 0:
            raise ValueError("grid height must be a multiple of the factor")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.tensor.shape

    def source_rows(self) -> np.ndarray:
        return self.tensor[:, :: self.factor, :]


def segment_recording(
    rec: IQRecording,
    window: int = DEFAULT_WINDOW,
    stride: Optional[int] = None,
) -> List[IQSample]:
    # stride defaults to non-overlapping windows
    stride = window if stride is None else stride
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be positive")
    if rec.samples_per_antenna < window:
        raise ValueError(
            f"recording has {rec.samples_per_antenna} samples per antenna, "
            f"shorter than the {window}-sample window"
        )
    count = (rec.samples_per_antenna - window) // stride + 1
    samples, dropped = [], 0
    for k in range(count):
        start = k * stride
        tensor = rec.data[:, :, start : start + window].copy()
        if not np.any(tensor):
            dropped += 1
            continue
        samples.append(IQSample(tensor=tensor, labels=rec.labels))
    if dropped:
        logger.info("dropped %d all-zero windows out of %d", dropped, count)
    return samples


def unit_max_normalize(x: IQSample) -> IQSample:
    peak = np.max(np.abs(x.tensor))
    if peak == 0:
        raise ValueError("cannot normalize an all-zero sample")
    return IQSample(tensor=(x.tensor / peak).astype(x.tensor.dtype), labels=x.labels)


def upsample_antennas(x: IQSample, factor: int = DEFAULT_UPSAMPLING) -> GridTensor:
    if factor < 1:
        raise ValueError("upsampling factor must be positive")
    return GridTensor(tensor=np.repeat(x.tensor, factor, axis=1), factor=factor)


def square_grid_factor(antennas: int, window: int) -> int:
    if window % antennas != 0:
        raise ValueError("window must be a multiple of the antenna count")
    return window // antennas
