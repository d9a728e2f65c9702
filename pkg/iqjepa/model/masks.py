"""Mask geometries generated on the encoder's latent grid.

A mask holds 1 at visible cells and 0 at masked cells. Masks are always drawn
at latent resolution and expanded by integer nearest-neighbour replication, so
every per-layer mask is exact.
"""
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

DimsType = Tuple[int, int]
RectType = Tuple[int, int, int, int]

DEFAULT_TARGET_FRACTION = 0.25
_MAX_PLACEMENTS = 100_000


class MaskGeometry(str, Enum):
    RANDOM = "random"
    ANTENNA = "antenna"
    TIME = "time"
    MULTIBLOCK = "multiblock"


@dataclass(frozen=True, eq=False)
class LatentMask:
    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid)
        if grid.ndim != 2:
            raise ValueError("latent mask must be a 2-D grid")
        if not np.all((grid == 0) | (grid == 1)):
            raise ValueError("latent mask entries must be 0 or 1")
        if not np.any(grid == 1):
            raise ValueError("latent mask must keep at least one visible cell")
        object.__setattr__(self, "grid", grid.astype(np.uint8))

    def __eq__(self, other: "LatentMask") -> bool:
        if not isinstance(other, LatentMask):
            return NotImplemented
        return np.array_equal(self.grid, other.grid)

    @property
    def dims(self) -> DimsType:
        return self.grid.shape

    @property
    def masked_count(self) -> int:
        return int(np.count_nonzero(self.grid == 0))

    @property
    def masked_fraction(self) -> float:
        return self.masked_count / self.grid.size

    def masked_indices(self) -> List[Tuple[int, int]]:
        return [tuple(int(v) for v in ij) for ij in np.argwhere(self.grid == 0)]

    @classmethod
    def visible(cls, dims: DimsType) -> "LatentMask":
        return cls(grid=np.ones(dims, dtype=np.uint8))


@dataclass(frozen=True)
class MaskSpec:
    geometry: MaskGeometry = MaskGeometry.TIME
    patch_latent: Optional[DimsType] = None
    target_fraction: float = DEFAULT_TARGET_FRACTION
    seed: int = 0
    block_units: int = 2
    scattered: bool = False

    def __post_init__(self):
        object.__setattr__(self, "geometry", MaskGeometry(self.geometry))
        if not 0 < self.target_fraction < 1:
            raise ValueError("target fraction must be in (0, 1)")
        if self.patch_latent is not None:
            rows, cols = self.patch_latent
            if rows < 1 or cols < 1:
                raise ValueError("patch dimensions must be positive")
            object.__setattr__(self, "patch_latent", (int(rows), int(cols)))
        if self.block_units < 1:
            raise ValueError("block units must be positive")

    def resolve(self, dims: DimsType, antennas: int) -> "MaskSpec":
        if self.patch_latent is not None:
            return self
        return replace(
            self, patch_latent=default_patch_latent(self.geometry, dims, antennas)
        )


def default_patch_latent(
    geometry: MaskGeometry,
    dims: DimsType,
    antennas: int,
) -> DimsType:
    # one antenna band high, one eighth of the time axis wide
    h, w = dims
    column = max(1, w // 8)
    geometry = MaskGeometry(geometry)
    if geometry == MaskGeometry.TIME:
        return h, column
    if antennas < 1 or h < antennas:
        raise ValueError(
            f"latent height {h} cannot hold one band per antenna ({antennas})"
        )
    band = h // antennas
    if geometry == MaskGeometry.ANTENNA:
        return band, w
    return band, column


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _check_fits(patch: DimsType, dims: DimsType) -> None:
    if patch[0] > dims[0] or patch[1] > dims[1]:
        raise ValueError(f"patch {patch} does not fit in latent grid {dims}")


def _place_rectangles(
    unit: DimsType,
    dims: DimsType,
    target_fraction: float,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, List[RectType]]:
    _check_fits(unit, dims)
    total = dims[0] * dims[1]
    unit_area = unit[0] * unit[1]
    if target_fraction + unit_area / total >= 1:
        raise ValueError("target fraction leaves no visible context")
    grid = np.ones(dims, dtype=np.uint8)
    rects: List[RectType] = []
    masked = 0
    while masked < target_fraction * total:
        if len(rects) >= _MAX_PLACEMENTS:
            raise RuntimeError("mask placement did not reach the target fraction")
        i = int(rng.integers(0, dims[0] - unit[0] + 1))
        j = int(rng.integers(0, dims[1] - unit[1] + 1))
        grid[i : i + unit[0], j : j + unit[1]] = 0
        rects.append((i, j, unit[0], unit[1]))
        masked = int(np.count_nonzero(grid == 0))
    return grid, rects


def gen_random_mask(
    spec: MaskSpec,
    dims: DimsType,
    rng: np.random.Generator,
) -> LatentMask:
    grid, _ = _place_rectangles(spec.patch_latent, dims, spec.target_fraction, rng)
    return LatentMask(grid=grid)


def gen_antenna_mask(
    spec: MaskSpec,
    dims: DimsType,
    rng: np.random.Generator,
) -> LatentMask:
    band_rows = spec.patch_latent[0]
    _check_fits(spec.patch_latent, dims)
    if dims[0] % band_rows != 0:
        raise ValueError("latent height must be a multiple of the antenna band")
    bands = dims[0] // band_rows
    k = max(1, _round_half_up(spec.target_fraction * bands))
    if k >= bands:
        raise ValueError("antenna mask would hide every band")
    grid = np.ones(dims, dtype=np.uint8)
    for band in rng.choice(bands, size=k, replace=False):
        grid[band * band_rows : (band + 1) * band_rows, :] = 0
    return LatentMask(grid=grid)


def gen_time_mask(
    spec: MaskSpec,
    dims: DimsType,
    rng: np.random.Generator,
) -> LatentMask:
    unit_cols = spec.patch_latent[1]
    _check_fits(spec.patch_latent, dims)
    if dims[1] % unit_cols != 0:
        raise ValueError("latent width must be a multiple of the column unit")
    units = dims[1] // unit_cols
    k = max(1, _round_half_up(spec.target_fraction * units))
    if k >= units:
        raise ValueError("time mask would hide every column")
    grid = np.ones(dims, dtype=np.uint8)
    if spec.scattered:
        chosen = rng.choice(units, size=k, replace=False)
    else:
        start = int(rng.integers(0, units - k + 1))
        chosen = range(start, start + k)
    for unit in chosen:
        grid[:, unit * unit_cols : (unit + 1) * unit_cols] = 0
    return LatentMask(grid=grid)


def multiblock_unit(spec: MaskSpec) -> DimsType:
    rows, cols = spec.patch_latent
    return rows * spec.block_units, cols * spec.block_units


def gen_multiblock_mask(
    spec: MaskSpec,
    dims: DimsType,
    rng: np.random.Generator,
) -> LatentMask:
    block = multiblock_unit(spec)
    grid, _ = _place_rectangles(block, dims, spec.target_fraction, rng)
    return LatentMask(grid=grid)


_GENERATORS: Dict[MaskGeometry, Callable[..., LatentMask]] = {
    MaskGeometry.RANDOM: gen_random_mask,
    MaskGeometry.ANTENNA: gen_antenna_mask,
    MaskGeometry.TIME: gen_time_mask,
    MaskGeometry.MULTIBLOCK: gen_multiblock_mask,
}


def generate_mask(
    spec: MaskSpec,
    dims: DimsType,
    rng: np.random.Generator,
) -> LatentMask:
    if spec.patch_latent is None:
        raise ValueError("mask spec must be resolved against the grid first")
    return _GENERATORS[spec.geometry](spec, dims, rng)


def sample_rng(base_seed: int, sample_index: int) -> np.random.Generator:
    return np.random.default_rng(base_seed ^ sample_index)


def generate_batch_masks(
    spec: MaskSpec,
    dims: DimsType,
    first_index: int,
    count: int,
) -> List[LatentMask]:
    return [
        generate_mask(spec, dims, sample_rng(spec.seed, first_index + i))
        for i in range(count)
    ]


def upsample_mask(m: LatentMask, stride: int) -> np.ndarray:
    if stride < 1:
        raise ValueError("stride must be positive")
    return np.repeat(np.repeat(m.grid, stride, axis=0), stride, axis=1)


def _scale_axis(grid: np.ndarray, source: int, target: int, axis: int) -> np.ndarray:
    if target == source:
        return grid
    if target > source:
        if target % source != 0:
            raise ValueError(f"layer size {target} is not a multiple of {source}")
        return np.repeat(grid, target // source, axis=axis)
    if source % target != 0:
        raise ValueError(f"layer size {target} does not divide {source}")
    return np.take(grid, np.arange(0, source, source // target), axis=axis)


def adapt_mask_to_layer(m: LatentMask, layer_dims: DimsType) -> np.ndarray:
    h, w = layer_dims
    grid = _scale_axis(m.grid, m.dims[0], h, axis=0)
    return _scale_axis(grid, m.dims[1], w, axis=1)
