"""Conventional label estimators used to certify synthetic datasets."""
import numpy as np
from iqjepa.signal.grid import IQSample
from iqjepa.signal.synth import WaveformName, aoa_grid

ENVELOPE_THRESHOLD = 1.2


def adjacent_phase(sample: IQSample) -> float:
    """Phase step between neighbouring antennas, averaged over time."""
    x = sample.to_complex()
    if x.shape[0] < 2:
        raise ValueError("need at least two antennas")
    r = np.sum(x[1:] * np.conj(x[:-1]))
    return float(np.angle(r))


def estimate_aoa(sample: IQSample) -> float:
    return float(np.rad2deg(np.arcsin(np.clip(adjacent_phase(sample) / np.pi, -1, 1))))


def classify_aoa(sample: IQSample, classes: int) -> int:
    # wrapped phase distance; +-90 degrees alias on a half-wavelength array
    phase = adjacent_phase(sample)
    expected = np.pi * np.sin(np.deg2rad(aoa_grid(classes)))
    distance = np.abs(np.angle(np.exp(1j * (phase - expected))))
    return int(np.argmin(distance))


def envelope_moment(sample: IQSample) -> float:
    """E|x|^4 / (E|x|^2)^2, 1 for constant-modulus signals."""
    power = np.abs(sample.to_complex()) ** 2
    return float(np.mean(power**2) / np.mean(power) ** 2)


def is_constant_envelope(
    sample: IQSample, threshold: float = ENVELOPE_THRESHOLD
) -> bool:
    return envelope_moment(sample) < threshold


def classify_tone_qam64(sample: IQSample, threshold: float = ENVELOPE_THRESHOLD) -> int:
    names = list(WaveformName)
    if is_constant_envelope(sample, threshold):
        return names.index(WaveformName.TONE)
    return names.index(WaveformName.QAM64)
