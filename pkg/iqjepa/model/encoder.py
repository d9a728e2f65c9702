from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch
from iqjepa.model.layers import (
    LayerKind,
    LayerSpec,
    MaskedBatchNorm2d,
    adapt_mask_tensor,
    build_layer,
    separable_block,
)
from iqjepa.model.masks import LatentMask
from torch import nn

MaskLike = Any


@dataclass(frozen=True)
class EncoderConfig:
    architecture: str = "wjcnn"
    in_channels: int = 2
    stem_channels: int = 24
    stage_channels: Tuple[int, ...] = (48, 96, 192)
    stage_stride: int = 2
    blocks_per_stage: int = 2

    def __post_init__(self):
        object.__setattr__(self, "stage_channels", tuple(self.stage_channels))
        if len(self.stage_channels) == 0:
            raise ValueError("encoder needs at least one stage")
        if self.stage_stride not in (1, 2):
            raise ValueError("stage stride must be 1 or 2")
        if self.blocks_per_stage < 1:
            raise ValueError("stages need at least one block")

    @property
    def total_stride(self) -> int:
        return 4 * self.stage_stride ** len(self.stage_channels)

    @property
    def latent_channels(self) -> int:
        return self.stage_channels[-1]

    def layer_specs(self) -> List[LayerSpec]:
        specs = [
            LayerSpec(
                LayerKind.CONV,
                self.in_channels,
                self.stem_channels,
                kernel=(3, 3),
                stride=2,
                padding=1,
            ),
            LayerSpec(LayerKind.BATCHNORM, self.stem_channels, self.stem_channels),
            LayerSpec(LayerKind.RELU, self.stem_channels, self.stem_channels),
            LayerSpec(
                LayerKind.MAXPOOL,
                self.stem_channels,
                self.stem_channels,
                kernel=(3, 3),
                stride=2,
                padding=1,
            ),
        ]
        channels = self.stem_channels
        for out_channels in self.stage_channels:
            specs.extend(separable_block(channels, out_channels, self.stage_stride))
            for _ in range(self.blocks_per_stage - 1):
                specs.extend(separable_block(out_channels, out_channels, 1))
            channels = out_channels
        return specs

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["stage_channels"] = list(self.stage_channels)
        return data


ARCHITECTURES: Dict[str, EncoderConfig] = {
    "wjcnn": EncoderConfig(),
    "wjcnn-tiny": EncoderConfig(
        architecture="wjcnn-tiny",
        stem_channels=4,
        stage_channels=(8,),
        stage_stride=1,
        blocks_per_stage=1,
    ),
}


def get_encoder_config(architecture: str) -> EncoderConfig:
    try:
        return ARCHITECTURES[architecture]
    except KeyError as e:
        known = ", ".join(sorted(ARCHITECTURES))
        raise ValueError(
            f"unknown architecture '{architecture}' (known: {known})"
        ) from e


def mask_tensor(
    masks: MaskLike,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    """Stack latent masks into a (B, 1, h, w) tensor with 1 at visible cells."""
    if isinstance(masks, torch.Tensor):
        tensor = masks
    elif isinstance(masks, LatentMask):
        tensor = torch.from_numpy(masks.grid)[None]
    else:
        tensor = torch.from_numpy(np.stack([m.grid for m in masks]))
    if tensor.dim() == 3:
        tensor = tensor[:, None]
    if tensor.dim() != 4 or tensor.shape[1] != 1:
        raise ValueError("masks must have shape (B, 1, h, w)")
    return tensor.to(dtype)


class Encoder(nn.Module):
    def __init__(
        self,
        config: Optional[EncoderConfig] = None,
        specs: Optional[List[LayerSpec]] = None,
    ) -> None:
        super().__init__()
        self.config = config or EncoderConfig()
        self.specs: Tuple[LayerSpec, ...] = tuple(specs or self.config.layer_specs())
        self.layers = nn.ModuleList(build_layer(s) for s in self.specs)

    @property
    def total_stride(self) -> int:
        stride = 1
        for spec in self.specs:
            stride *= spec.stride
        return stride

    @property
    def latent_channels(self) -> int:
        return self.specs[-1].out_channels

    def latent_dims(self, height: int, width: int) -> Tuple[int, int]:
        s = self.total_stride
        if height % s != 0 or width % s != 0:
            raise ValueError(
                f"input size {height}x{width} is not divisible by stride {s}"
            )
        return height // s, width // s

    def _check_input(self, x: torch.Tensor) -> Tuple[int, int]:
        if x.dim() != 4 or x.shape[1] != self.specs[0].in_channels:
            raise ValueError(
                f"expected input (B, {self.specs[0].in_channels}, H, W), "
                f"got {tuple(x.shape)}"
            )
        return self.latent_dims(x.shape[-2], x.shape[-1])

    def dense_forward(self, x: torch.Tensor) -> torch.Tensor:
        self._check_input(x)
        for layer in self.layers:
            x = layer(x)
        return x

    def sparse_forward(self, x_masked: torch.Tensor, masks: MaskLike) -> torch.Tensor:
        latent = self._check_input(x_masked)
        m = mask_tensor(masks, dtype=x_masked.dtype)
        if tuple(m.shape[-2:]) != latent:
            raise ValueError(
                f"mask size {tuple(m.shape[-2:])} does not match latent size {latent}"
            )
        if m.shape[0] != x_masked.shape[0]:
            raise ValueError("one mask per sample is required")
        h = x_masked * adapt_mask_tensor(m, x_masked.shape[-2:])
        for layer in self.layers:
            if isinstance(layer, MaskedBatchNorm2d):
                h = layer(h, adapt_mask_tensor(m, h.shape[-2:]))
            else:
                h = layer(h)
                h = h * adapt_mask_tensor(m, h.shape[-2:])
        return h

    def forward(
        self, x: torch.Tensor, masks: Optional[MaskLike] = None
    ) -> torch.Tensor:
        if masks is None:
            return self.dense_forward(x)
        return self.sparse_forward(x, masks)


def build_encoder(
    architecture: str = "wjcnn",
    seed: Optional[int] = None,
    dtype: torch.dtype = torch.float32,
) -> Encoder:
    if seed is not None:
        torch.manual_seed(seed)
    return Encoder(get_encoder_config(architecture)).to(dtype)


def zero_init_(module: nn.Module) -> nn.Module:
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()
    return module

