import numpy as np
from iqjepa.signal.baseline import (
    adjacent_phase,
    classify_aoa,
    classify_tone_qam64,
    envelope_moment,
    estimate_aoa,
)
from iqjepa.signal.grid import IQRecording, IQSample
from iqjepa.signal.synth import (
    RRC_SPAN,
    SAMPLES_PER_SYMBOL,
    WAVEFORMS,
    ChannelConfig,
    SyntheticDatasetSpec,
    WaveformName,
    aoa_grid,
    apply_channel,
    apply_steering,
    build_dataset,
    draw_symbols,
    modulate,
    rrc_taps,
    steering_vector,
    symbol_count,
    synthesize_cell,
)
from iqjepa.storage.dataset import read_dataset, read_manifest
from pytest import approx, mark, raises

CLEAN = ChannelConfig(snr_db=(20.0, 20.0), noise=False)


def _waveform(name: WaveformName):
    return next(w for w in WAVEFORMS if w.name == name)


def _sample(x: np.ndarray) -> IQSample:
    return IQSample(tensor=IQRecording.from_complex(x).data)


def test_waveform_ids():
    assert [w.id for w in WAVEFORMS] == list(range(7))
    assert WAVEFORMS[-1].name == WaveformName.TONE
    assert _waveform(WaveformName.TONE).alphabet is None
    assert len(_waveform(WaveformName.QAM64).alphabet) == 64


def test_rrc_taps():
    taps = rrc_taps(0.35, RRC_SPAN, SAMPLES_PER_SYMBOL)
    assert len(taps) == RRC_SPAN * SAMPLES_PER_SYMBOL + 1
    assert np.sum(taps**2) == approx(1.0)
    assert np.allclose(taps, taps[::-1])
    assert np.argmax(taps) == len(taps) // 2
    # alpha 0.25 puts a removable singularity on the sample grid
    assert np.all(np.isfinite(rrc_taps(0.25, RRC_SPAN, SAMPLES_PER_SYMBOL)))
    with raises(ValueError):
        rrc_taps(0.0, RRC_SPAN, SAMPLES_PER_SYMBOL)


@mark.parametrize("waveform", WAVEFORMS, ids=lambda w: w.name.value)
def test_unit_average_power(waveform):
    x = modulate(waveform, 100_000, np.random.default_rng(waveform.id))
    assert x.shape == (100_000,)
    assert 0.95 <= np.mean(np.abs(x) ** 2) <= 1.05


@mark.parametrize("name", [WaveformName.TONE, WaveformName.FSK2])
def test_constant_modulus(name):
    x = modulate(_waveform(name), 1024, np.random.default_rng(0))
    assert np.allclose(np.abs(x), 1.0)


def test_bpsk_symbols():
    bpsk = _waveform(WaveformName.BPSK)
    symbols = draw_symbols(bpsk, symbol_count(64, bpsk.sps), np.random.default_rng(0))
    assert len(symbols) == 16
    assert set(symbols.tolist()) <= {1 + 0j, -1 + 0j}
    with raises(ValueError):
        draw_symbols(_waveform(WaveformName.TONE), 4, np.random.default_rng(0))


def test_modulate_too_short():
    with raises(ValueError):
        modulate(_waveform(WaveformName.QPSK), 2, np.random.default_rng(0))


def test_steering_vector():
    assert np.allclose(steering_vector(0.0, 4), np.ones(4))
    assert np.allclose(steering_vector(30.0, 2), [1, 1j])
    assert np.allclose(steering_vector(90.0, 3), [1, -1, 1])
    with raises(ValueError):
        steering_vector(91.0, 4)


def test_apply_steering_phase():
    x = modulate(_waveform(WaveformName.QPSK), 256, np.random.default_rng(1))
    steered = apply_steering(x, 20.0, 4)
    assert steered.shape == (4, 256)
    expected = np.pi * np.sin(np.deg2rad(20.0))
    assert adjacent_phase(_sample(steered)) == approx(expected, abs=1e-5)
    assert estimate_aoa(_sample(steered)) == approx(20.0, abs=1e-3)


def test_steering_thirty_degrees():
    x = np.exp(1j * np.linspace(0, 3, 32))
    steered = apply_steering(x, 30.0, 3)
    assert np.allclose(steered[2], -steered[0])


def test_steering_survives_channel():
    spec = SyntheticDatasetSpec(
        aoa_classes=7, channel=ChannelConfig(snr_db=(20.0, 20.0))
    )
    angles = aoa_grid(spec.aoa_classes)
    for a in range(1, spec.aoa_classes - 1):
        sample = synthesize_cell(spec, 1, a, 0)
        expected = np.pi * np.sin(np.deg2rad(angles[a]))
        assert abs(adjacent_phase(sample) - expected) < 0.05


def test_channel_without_noise_is_a_rotation():
    x = modulate(_waveform(WaveformName.QAM16), 512, np.random.default_rng(2))
    x = apply_steering(x, -40.0, 4)
    cfg = ChannelConfig(cfo_max=0.0, noise=False)
    out, draw = apply_channel(x, cfg, np.random.default_rng(3))
    assert draw.cfo == 0.0
    assert np.allclose(out, x * np.exp(1j * draw.phase))


def test_channel_snr():
    x = modulate(_waveform(WaveformName.PSK8), 100_000, np.random.default_rng(4))
    x = apply_steering(x, 10.0, 4)
    noisy = ChannelConfig(snr_db=(10.0, 10.0))
    quiet = ChannelConfig(snr_db=(10.0, 10.0), noise=False)
    clean, _ = apply_channel(x, quiet, np.random.default_rng(5))
    out, draw = apply_channel(x, noisy, np.random.default_rng(5))
    noise = out - clean
    measured = 10 * np.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2))
    assert draw.snr_db == 10.0
    assert abs(measured - 10.0) < 0.5


def test_channel_config_validation():
    with raises(ValueError):
        ChannelConfig(snr_db=(20.0, 0.0))
    with raises(ValueError):
        ChannelConfig(cfo_max=0.01)


def test_aoa_grid():
    assert np.array_equal(aoa_grid(19)[[0, 9, 18]], [-90.0, 0.0, 90.0])
    assert np.array_equal(aoa_grid(1), [0.0])
    assert np.diff(aoa_grid(19)) == approx(np.full(18, 10.0))


def test_spec_counts():
    spec = SyntheticDatasetSpec()
    assert spec.test_replicas == 2
    assert SyntheticDatasetSpec(replicas=5, test_fraction=0.5).test_replicas == 3
    assert spec.label_names()["modulation"][-1] == "TONE"
    assert spec.label_names()["aoa"][0] == "-90"
    loaded = SyntheticDatasetSpec(channel={"snr_db": [5, 5], "antennas": 2})
    assert loaded.channel.antennas == 2
    with raises(ValueError):
        SyntheticDatasetSpec(waveforms=8)


def test_synthesize_cell_is_deterministic(small_synth_spec):
    a = synthesize_cell(small_synth_spec, 1, 2, 3)
    b = synthesize_cell(small_synth_spec, 1, 2, 3)
    assert np.array_equal(a.tensor, b.tensor)
    assert a.labels == (1, 2)
    assert np.max(np.abs(a.tensor)) == 1.0
    other = synthesize_cell(small_synth_spec, 1, 2, 4)
    assert not np.array_equal(a.tensor, other.tensor)


def test_build_dataset_split(tmp_path, small_synth_spec):
    splits = build_dataset(small_synth_spec, tmp_path)
    assert len(splits["train"]) == 2 * 3 * 4
    assert len(splits["test"]) == 2 * 3 * 1
    train = read_dataset(tmp_path, "train")
    assert np.array_equal(train.data, splits["train"].data)
    assert train.data.shape == (24, 2, 2, 16)
    manifest = read_manifest(tmp_path)
    assert manifest["splits"] == {"train": 24, "test": 6}
    assert manifest["spec"]["channel"]["antennas"] == 2
    again = build_dataset(small_synth_spec)
    assert np.array_equal(again["test"].data, splits["test"].data)


@mark.timeout(300)
def test_full_corpus_counts():
    splits = build_dataset(SyntheticDatasetSpec(seed=3))
    train, test = splits["train"], splits["test"]
    assert len(train) + len(test) == 7 * 19 * 10
    assert len(test) == 7 * 19 * 2
    assert train.data.shape[1:] == (2, 4, 256)
    peaks = np.abs(train.data).reshape(len(train), -1).max(axis=1)
    assert np.all(peaks == 1.0)
    counts = train.class_counts()
    assert all(v == 19 * 8 for v in counts["modulation"].values())
    assert all(v == 7 * 8 for v in counts["aoa"].values())


def _aliased(predicted: int, true: int, classes: int) -> bool:
    # -90 and +90 degrees produce the same inter-antenna phase
    return predicted == true or {predicted, true} == {0, classes - 1}


@mark.timeout(120)
def test_aoa_baseline_at_high_snr():
    spec = SyntheticDatasetSpec(
        waveforms=7, replicas=3, seed=4, channel=ChannelConfig(snr_db=(20.0, 20.0))
    )
    samples = [
        synthesize_cell(spec, w, a, r)
        for w in range(spec.waveforms)
        for a in range(spec.aoa_classes)
        for r in range(spec.replicas)
    ]
    classes = spec.aoa_classes
    hits = [
        _aliased(classify_aoa(s, classes), s.labels[1], classes) for s in samples
    ]
    assert np.mean(hits) >= 0.95


@mark.timeout(120)
def test_tone_qam64_baseline_at_high_snr():
    spec = SyntheticDatasetSpec(
        aoa_classes=5, replicas=20, seed=5, channel=ChannelConfig(snr_db=(20.0, 20.0))
    )
    tone = [w.id for w in WAVEFORMS if w.name == WaveformName.TONE][0]
    qam = [w.id for w in WAVEFORMS if w.name == WaveformName.QAM64][0]
    samples = [
        synthesize_cell(spec, w, a, r)
        for w in (tone, qam)
        for a in range(spec.aoa_classes)
        for r in range(spec.replicas)
    ]
    hits = [classify_tone_qam64(s) == s.labels[0] for s in samples]
    assert np.mean(hits) >= 0.95
    tones = [envelope_moment(s) for s in samples if s.labels[0] == tone]
    assert max(tones) < 1.2
