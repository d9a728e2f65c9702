"""Run configurations, one dataclass per command.

Values resolve as defaults, then a ``--config`` JSON file, then command-line
flags. Every run writes the resolved configuration next to its outputs.
"""
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Type, TypeVar

from iqjepa.errors import ConfigError, DataError
from iqjepa.evaluate.fewshot import (
    DEFAULT_SEEDS,
    DEFAULT_SHOTS,
    ProbeMethod,
    ShotProtocol,
)
from iqjepa.evaluate.embeddings import Task
from iqjepa.evaluate.probe import DEFAULT_K, ProbeConfig
from iqjepa.model.encoder import get_encoder_config
from iqjepa.model.masks import DEFAULT_TARGET_FRACTION, MaskGeometry, MaskSpec
from iqjepa.signal.grid import DEFAULT_ANTENNAS, DEFAULT_WINDOW
from iqjepa.signal.synth import ChannelConfig, SyntheticDatasetSpec
from iqjepa.storage.files import PathType, read_json, write_json
from iqjepa.train.jepa import TrainConfig

SCHEMA_VERSION = 1
CONFIG_NAME = "config.json"

C = TypeVar("C")


@dataclass(frozen=True)
class SynthConfig:
    schema_version: int = SCHEMA_VERSION
    out: str = ""
    waveforms: int = 7
    aoa_classes: int = 19
    replicas: int = 10
    window: int = DEFAULT_WINDOW
    seed: int = 0
    test_fraction: float = 0.2
    snr_db: List[float] = field(default_factory=lambda: [0.0, 20.0])
    cfo_max: float = 1e-4
    antennas: int = DEFAULT_ANTENNAS
    noise: bool = True

    def __post_init__(self):
        self.dataset_spec()

    def dataset_spec(self) -> SyntheticDatasetSpec:
        return SyntheticDatasetSpec(
            waveforms=self.waveforms,
            aoa_classes=self.aoa_classes,
            replicas=self.replicas,
            window=self.window,
            seed=self.seed,
            test_fraction=self.test_fraction,
            channel=ChannelConfig(
                snr_db=tuple(self.snr_db),
                cfo_max=self.cfo_max,
                antennas=self.antennas,
                noise=self.noise,
            ),
        )


@dataclass(frozen=True)
class PretrainConfig:
    schema_version: int = SCHEMA_VERSION
    dataset: str = ""
    out: str = ""
    split: str = "train"
    epochs: int = 100
    batch_size: int = 32
    base_lr: float = 1e-3
    weight_decay: float = 0.05
    tau_start: float = 0.996
    tau_end: float = 1.0
    mask: str = MaskGeometry.TIME.value
    mask_fraction: float = DEFAULT_TARGET_FRACTION
    patch_latent: Optional[List[int]] = None
    block_units: int = 2
    scattered: bool = False
    seed: int = 0
    precision: str = "float32"
    architecture: str = "wjcnn"
    upsampling: Optional[int] = None
    clip_grad_norm: Optional[float] = None
    log_every: int = 10
    record_wall_time: bool = False

    def __post_init__(self):
        self.train_config()

    def mask_spec(self) -> MaskSpec:
        return MaskSpec(
            geometry=MaskGeometry(self.mask),
            patch_latent=tuple(self.patch_latent) if self.patch_latent else None,
            target_fraction=self.mask_fraction,
            seed=self.seed,
            block_units=self.block_units,
            scattered=self.scattered,
        )

    def train_config(self) -> TrainConfig:
        get_encoder_config(self.architecture)
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            base_lr=self.base_lr,
            weight_decay=self.weight_decay,
            tau_start=self.tau_start,
            tau_end=self.tau_end,
            mask=self.mask_spec(),
            seed=self.seed,
            precision=self.precision,
            architecture=self.architecture,
            upsampling=self.upsampling,
            clip_grad_norm=self.clip_grad_norm,
            log_every=self.log_every,
            record_wall_time=self.record_wall_time,
        )


@dataclass(frozen=True)
class EvalConfig:
    schema_version: int = SCHEMA_VERSION
    checkpoint: str = ""
    dataset: str = ""
    out: str = ""
    init: str = "checkpoint"
    architecture: str = "wjcnn"
    seed: int = 0
    shots: List[int] = field(default_factory=lambda: list(DEFAULT_SHOTS))
    seeds: int = DEFAULT_SEEDS
    methods: List[str] = field(default_factory=lambda: [m.value for m in ProbeMethod])
    tasks: List[str] = field(default_factory=lambda: [t.value for t in Task])
    k: int = DEFAULT_K
    probe_iterations: int = 500
    probe_lr: float = 0.1
    probe_l2: float = 1e-4
    upsampling: Optional[int] = None

    def __post_init__(self):
        if self.init not in ("checkpoint", "random"):
            raise ValueError("init must be 'checkpoint' or 'random'")
        if self.k < 1:
            raise ValueError("k must be positive")
        for m in self.methods:
            ProbeMethod(m)
        for t in self.tasks:
            Task(t)
        get_encoder_config(self.architecture)
        self.protocol()
        self.probe()

    def protocol(self) -> ShotProtocol:
        return ShotProtocol(shots=tuple(self.shots), seeds=self.seeds)

    def probe(self) -> ProbeConfig:
        return ProbeConfig(
            iterations=self.probe_iterations, lr=self.probe_lr, l2=self.probe_l2
        )


@dataclass(frozen=True)
class MaskVizConfig:
    schema_version: int = SCHEMA_VERSION
    out: str = ""
    geometries: List[str] = field(
        default_factory=lambda: [g.value for g in MaskGeometry]
    )
    seed: int = 0
    index: int = 0
    mask_fraction: float = DEFAULT_TARGET_FRACTION
    patch_latent: Optional[List[int]] = None
    block_units: int = 2
    scattered: bool = False
    antennas: int = DEFAULT_ANTENNAS
    window: int = DEFAULT_WINDOW
    upsampling: Optional[int] = None
    architecture: str = "wjcnn"

    def __post_init__(self):
        for g in self.geometries:
            self.mask_spec(g)
        get_encoder_config(self.architecture)

    def mask_spec(self, geometry: str) -> MaskSpec:
        return MaskSpec(
            geometry=MaskGeometry(geometry),
            patch_latent=tuple(self.patch_latent) if self.patch_latent else None,
            target_fraction=self.mask_fraction,
            seed=self.seed,
            block_units=self.block_units,
            scattered=self.scattered,
        )


@dataclass(frozen=True)
class IngestConfig:
    schema_version: int = SCHEMA_VERSION
    input: str = ""
    meta: Optional[str] = None
    out: str = ""
    window: int = DEFAULT_WINDOW
    stride: Optional[int] = None
    tile_antennas: Optional[int] = DEFAULT_ANTENNAS
    test_fraction: float = 0.0

    def __post_init__(self):
        if self.window < 1 or (self.stride is not None and self.stride < 1):
            raise ValueError("window and stride must be positive")
        if self.tile_antennas is not None and self.tile_antennas < 1:
            raise ValueError("tile count must be positive")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test fraction must be in [0, 1)")


def load_config(cls: Type[C], data: Mapping[str, Any]) -> C:
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def read_config_file(path: PathType) -> Dict[str, Any]:
    try:
        return read_json(path)
    except DataError as e:
        raise ConfigError(str(e)) from e


def resolve_config(
    cls: Type[C],
    path: Optional[PathType] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> C:
    merged: Dict[str, Any] = {}
    if path is not None:
        merged.update(read_config_file(path))
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return load_config(cls, merged)


def dump_config(config: Any, directory: PathType) -> Path:
    return write_json(Path(directory) / CONFIG_NAME, asdict(config))
