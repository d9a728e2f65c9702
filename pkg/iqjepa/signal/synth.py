"""Labelled synthetic multi-antenna IQ corpora.

Each (waveform, AoA, replica) cell draws its own generator from the dataset
seed and its indices, so cells can be produced in any order or in parallel.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from iqjepa.runtime import get_thread_count
from iqjepa.signal.grid import (
    DEFAULT_ANTENNAS,
    DEFAULT_WINDOW,
    IQRecording,
    IQSample,
    segment_recording,
    unit_max_normalize,
)
from iqjepa.storage.dataset import IQDataset, write_dataset
from iqjepa.storage.files import PathType
from scipy.signal import upfirdn

logger = logging.getLogger(__name__)

SAMPLES_PER_SYMBOL = 4
ROLLOFF = 0.35
RRC_SPAN = 8
TONE_MAX_FREQUENCY = 0.1
DEFAULT_TEST_FRACTION = 0.2


class WaveformName(str, Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    PSK8 = "PSK8"
    QAM16 = "QAM16"
    QAM64 = "QAM64"
    FSK2 = "FSK2"
    TONE = "TONE"


def psk_alphabet(order: int, offset: float = 0.0) -> np.ndarray:
    return np.exp(1j * (offset + 2 * np.pi * np.arange(order) / order))


def square_qam_alphabet(order: int) -> np.ndarray:
    m = int(round(math.sqrt(order)))
    if m * m != order:
        raise ValueError("QAM order must be a perfect square")
    levels = np.arange(-(m - 1), m, 2)
    alphabet = (levels[:, None] + 1j * levels[None, :]).reshape(-1)
    return alphabet / np.sqrt(np.mean(np.abs(alphabet) ** 2))


_ALPHABETS = {
    WaveformName.BPSK: lambda: np.array([1.0 + 0j, -1.0 + 0j]),
    WaveformName.QPSK: lambda: psk_alphabet(4, np.pi / 4),
    WaveformName.PSK8: lambda: psk_alphabet(8),
    WaveformName.QAM16: lambda: square_qam_alphabet(16),
    WaveformName.QAM64: lambda: square_qam_alphabet(64),
}


@dataclass(frozen=True, eq=False)
class WaveformClass:
    id: int
    name: WaveformName
    sps: int = SAMPLES_PER_SYMBOL
    rolloff: float = ROLLOFF

    def __post_init__(self):
        object.__setattr__(self, "name", WaveformName(self.name))
        if self.sps < 1:
            raise ValueError("samples per symbol must be positive")
        if not 0 < self.rolloff <= 1:
            raise ValueError("rolloff must be in (0, 1]")

    @property
    def alphabet(self) -> Optional[np.ndarray]:
        factory = _ALPHABETS.get(self.name)
        return factory() if factory else None


WAVEFORMS: Tuple[WaveformClass, ...] = tuple(
    WaveformClass(i, name) for i, name in enumerate(WaveformName)
)


def rrc_taps(alpha: float, span: int, sps: int) -> np.ndarray:
    """Root-raised-cosine taps with unit energy, ``span * sps + 1`` long."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must be in (0, 1]")
    n = span * sps
    t = np.arange(-n / 2, n / 2 + 1) / sps
    h = np.empty_like(t)
    centre = np.abs(t) < 1e-12
    edge = np.abs(np.abs(4 * alpha * t) - 1) < 1e-8
    rest = ~(centre | edge)
    h[centre] = 1 + alpha * (4 / np.pi - 1)
    h[edge] = (alpha / np.sqrt(2)) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * alpha))
        + (1 - 2 / np.pi) * np.cos(np.pi / (4 * alpha))
    )
    tr = t[rest]
    h[rest] = (
        np.sin(np.pi * tr * (1 - alpha))
        + 4 * alpha * tr * np.cos(np.pi * tr * (1 + alpha))
    ) / (np.pi * tr * (1 - (4 * alpha * tr) ** 2))
    return h / np.sqrt(np.sum(h**2))


def symbol_count(n_samples: int, sps: int) -> int:
    return math.ceil(n_samples / sps)


def draw_symbols(
    cls: WaveformClass, n_symbols: int, rng: np.random.Generator
) -> np.ndarray:
    alphabet = cls.alphabet
    if alphabet is None:
        raise ValueError(f"{cls.name.value} has no symbol alphabet")
    return alphabet[rng.integers(0, len(alphabet), size=n_symbols)]


def _shape_pulses(
    cls: WaveformClass, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    pad = RRC_SPAN // 2
    symbols = draw_symbols(cls, symbol_count(n_samples, cls.sps) + 2 * pad, rng)
    # unit-energy taps carry 1/sps of the symbol power per sample
    taps = rrc_taps(cls.rolloff, RRC_SPAN, cls.sps) * np.sqrt(cls.sps)
    shaped = upfirdn(taps, symbols, up=cls.sps)
    start = (len(taps) - 1) // 2 + pad * cls.sps
    return shaped[start : start + n_samples]


def _continuous_phase_fsk(
    cls: WaveformClass, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    bits = rng.integers(0, 2, size=symbol_count(n_samples, cls.sps))
    # modulation index 1: tones at +-1/(2 sps) cycles per sample
    freq = np.repeat(2 * bits - 1, cls.sps)[:n_samples] / (2 * cls.sps)
    phase = 2 * np.pi * np.cumsum(freq) + rng.uniform(0, 2 * np.pi)
    return np.exp(1j * phase)


def _tone(n_samples: int, rng: np.random.Generator) -> np.ndarray:
    f0 = rng.uniform(-TONE_MAX_FREQUENCY, TONE_MAX_FREQUENCY)
    return np.exp(1j * 2 * np.pi * f0 * np.arange(n_samples))


def modulate(
    cls: WaveformClass, n_samples: int, rng: np.random.Generator
) -> np.ndarray:
    if n_samples < cls.sps:
        raise ValueError("need at least one symbol worth of samples")
    if cls.name == WaveformName.TONE:
        return _tone(n_samples, rng)
    if cls.name == WaveformName.FSK2:
        return _continuous_phase_fsk(cls, n_samples, rng)
    return _shape_pulses(cls, n_samples, rng)


def steering_vector(aoa_deg: float, antennas: int) -> np.ndarray:
    if abs(aoa_deg) > 90:
        raise ValueError("angle of arrival must be within [-90, 90] degrees")
    n = np.arange(antennas)
    return np.exp(1j * np.pi * n * np.sin(np.deg2rad(aoa_deg)))


def apply_steering(
    baseband: np.ndarray, aoa_deg: float, antennas: int = DEFAULT_ANTENNAS
) -> np.ndarray:
    """Half-wavelength ULA, narrowband: antenna n sees a phase pi n sin(aoa)."""
    return steering_vector(aoa_deg, antennas)[:, None] * np.asarray(baseband)[None, :]


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: Tuple[float, float] = (0.0, 20.0)
    cfo_max: float = 1e-4
    antennas: int = DEFAULT_ANTENNAS
    noise: bool = True

    def __post_init__(self):
        lo, hi = self.snr_db
        object.__setattr__(self, "snr_db", (float(lo), float(hi)))
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ValueError("snr range must be finite and ordered")
        if not 0 <= self.cfo_max < 0.01:
            raise ValueError("cfo magnitude must be below 0.01")
        if self.antennas < 1:
            raise ValueError("antenna count must be positive")


@dataclass(frozen=True)
class ChannelDraw:
    snr_db: float
    cfo: float
    phase: float


def apply_channel(
    x: np.ndarray,
    cfg: ChannelConfig,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, ChannelDraw]:
    """Common phase and CFO rotation on every antenna, then per-antenna AWGN."""
    x = np.atleast_2d(x)
    draw = ChannelDraw(
        snr_db=float(rng.uniform(*cfg.snr_db)),
        cfo=float(rng.uniform(-cfg.cfo_max, cfg.cfo_max)),
        phase=float(rng.uniform(0, 2 * np.pi)),
    )
    t = np.arange(x.shape[-1])
    rotated = x * np.exp(1j * (draw.phase + 2 * np.pi * draw.cfo * t))[None, :]
    if not cfg.noise:
        return rotated, draw
    power = np.mean(np.abs(rotated) ** 2)
    sigma = np.sqrt(power / 10 ** (draw.snr_db / 10) / 2)
    noise = sigma * (
        rng.standard_normal(rotated.shape) + 1j * rng.standard_normal(rotated.shape)
    )
    return rotated + noise, draw


def aoa_grid(classes: int) -> np.ndarray:
    if classes < 1:
        raise ValueError("need at least one AoA class")
    if classes == 1:
        return np.zeros(1)
    return np.linspace(-90.0, 90.0, classes)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    waveforms: int = len(WAVEFORMS)
    aoa_classes: int = 19
    replicas: int = 10
    window: int = DEFAULT_WINDOW
    seed: int = 0
    test_fraction: float = DEFAULT_TEST_FRACTION
    channel: ChannelConfig = field(default_factory=ChannelConfig)

    def __post_init__(self):
        if isinstance(self.channel, dict):
            channel = dict(self.channel)
            if "snr_db" in channel:
                channel["snr_db"] = tuple(channel["snr_db"])
            object.__setattr__(self, "channel", ChannelConfig(**channel))
        if not 1 <= self.waveforms <= len(WAVEFORMS):
            raise ValueError(f"waveform count must be in [1, {len(WAVEFORMS)}]")
        if self.aoa_classes < 1 or self.replicas < 1:
            raise ValueError("aoa classes and replicas must be positive")
        if self.window < SAMPLES_PER_SYMBOL:
            raise ValueError("window is shorter than one symbol")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test fraction must be in [0, 1)")

    @property
    def test_replicas(self) -> int:
        return _round_half_up(self.test_fraction * self.replicas)

    @property
    def classes(self) -> Tuple[WaveformClass, ...]:
        return WAVEFORMS[: self.waveforms]

    def label_names(self) -> Dict[str, List[str]]:
        return {
            "modulation": [c.name.value for c in self.classes],
            "aoa": [f"{deg:g}" for deg in aoa_grid(self.aoa_classes)],
        }

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["channel"]["snr_db"] = list(self.channel.snr_db)
        return data


def cell_rng(seed: int, waveform: int, aoa: int, replica: int) -> np.random.Generator:
    return np.random.default_rng([seed, waveform, aoa, replica])


def synthesize_cell(
    spec: SyntheticDatasetSpec, waveform: int, aoa: int, replica: int
) -> IQSample:
    rng = cell_rng(spec.seed, waveform, aoa, replica)
    angles = aoa_grid(spec.aoa_classes)
    baseband = modulate(spec.classes[waveform], spec.window, rng)
    steered = apply_steering(baseband, angles[aoa], spec.channel.antennas)
    received, _ = apply_channel(steered, spec.channel, rng)
    recording = IQRecording.from_complex(received, labels=(waveform, aoa))
    (sample,) = segment_recording(recording, window=spec.window)
    return unit_max_normalize(sample)


def build_dataset(
    spec: SyntheticDatasetSpec,
    out_dir: Optional[PathType] = None,
) -> Dict[str, IQDataset]:
    """Synthesize every cell, split replicas into train/test, optionally write."""
    if spec.test_replicas >= spec.replicas:
        raise ValueError("test fraction leaves no training replicas")
    cells = [
        (w, a, r)
        for w in range(spec.waveforms)
        for a in range(spec.aoa_classes)
        for r in range(spec.replicas)
    ]
    with ThreadPoolExecutor(max_workers=get_thread_count()) as pool:
        samples = list(pool.map(lambda c: synthesize_cell(spec, *c), cells))
    first_test = spec.replicas - spec.test_replicas
    parts: Dict[str, List[IQSample]] = {"train": [], "test": []}
    for (_, _, r), sample in zip(cells, samples):
        parts["test" if r >= first_test else "train"].append(sample)
    names = spec.label_names()
    splits = {
        name: IQDataset.from_samples(items, label_names=names)
        for name, items in parts.items()
        if items
    }
    logger.info(
        "synthesized %d samples (%d waveforms x %d angles x %d replicas)",
        len(samples),
        spec.waveforms,
        spec.aoa_classes,
        spec.replicas,
    )
    if out_dir is not None:
        write_dataset(splits, Path(out_dir), spec=spec.to_dict())
    return splits
