from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import torch
from torch import nn

BATCHNORM_EPS = 1e-5
BATCHNORM_MOMENTUM = 0.1


class LayerKind(str, Enum):
    CONV = "conv"
    DEPTHWISE_CONV = "depthwise_conv"
    POINTWISE_CONV = "pointwise_conv"
    MAXPOOL = "maxpool"
    BATCHNORM = "batchnorm"
    RELU = "relu"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_channels: int
    out_channels: int
    kernel: Tuple[int, int] = (1, 1)
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if self.stride not in (1, 2):
            raise ValueError("layer stride must be 1 or 2")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.kind == LayerKind.POINTWISE_CONV and self.kernel != (1, 1):
            raise ValueError("pointwise convolution must use a 1x1 kernel")
        if self.kind not in (LayerKind.CONV, LayerKind.POINTWISE_CONV):
            if self.in_channels != self.out_channels:
                raise ValueError(f"{self.kind.value} layer cannot change channels")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["kind"] = self.kind.value
        data["kernel"] = list(self.kernel)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LayerSpec":
        return cls(**{**data, "kernel": tuple(data["kernel"])})


class MaskedBatchNorm2d(nn.BatchNorm2d):
    def __init__(self, num_features: int) -> None:
        super().__init__(num_features, eps=BATCHNORM_EPS, momentum=BATCHNORM_MOMENTUM)

    def forward(
        self, x: torch.Tensor, mask: Optional[torch.Tensor] = None
    ) -> torch.Tensor:
        if mask is None:
            return super().forward(x)
        return masked_batchnorm(x, mask, self)


def masked_batchnorm(
    h: torch.Tensor,
    layer_mask: torch.Tensor,
    state: nn.BatchNorm2d,
) -> torch.Tensor:
    """Batch norm whose statistics only see visible positions.

    ``layer_mask`` has shape (B, 1, H, W) with 1 at visible positions. Masked
    positions come out as exact zeros. A fully visible mask takes the dense
    batch norm path, so it matches the dense network bit for bit.
    """
    if layer_mask.shape[-2:] != h.shape[-2:]:
        raise ValueError("layer mask does not match the feature map")
    if bool((layer_mask > 0).all()):
        return nn.BatchNorm2d.forward(state, h)
    visible = layer_mask.to(h.dtype)
    count = visible.sum() * 1.0
    n = int(count.item())
    if n == 0:
        raise ValueError("batch norm needs at least one unmasked position")
    if state.training or state.running_mean is None:
        mean = (h * visible).sum(dim=(0, 2, 3)) / count
        centered = (h - mean[None, :, None, None]) * visible
        var = (centered * centered).sum(dim=(0, 2, 3)) / count
        if state.training and state.track_running_stats:
            with torch.no_grad():
                unbiased = var * (n / (n - 1)) if n > 1 else var
                momentum = state.momentum
                state.running_mean.mul_(1 - momentum).add_(momentum * mean)
                state.running_var.mul_(1 - momentum).add_(momentum * unbiased)
                state.num_batches_tracked.add_(1)
    else:
        mean, var = state.running_mean, state.running_var
    scale = torch.rsqrt(var + state.eps)
    out = (h - mean[None, :, None, None]) * scale[None, :, None, None]
    if state.affine:
        out = out * state.weight[None, :, None, None] + state.bias[None, :, None, None]
    return torch.where(visible > 0, out, torch.zeros_like(out))


def adapt_mask_tensor(mask: torch.Tensor, size: Tuple[int, int]) -> torch.Tensor:
    """Nearest-neighbour scaling of a (B, 1, h, w) mask by integer ratios."""
    for axis, target in ((-2, size[0]), (-1, size[1])):
        source = mask.shape[axis]
        if target == source:
            continue
        if target > source:
            if target % source != 0:
                raise ValueError(f"cannot adapt mask of size {source} to {target}")
            mask = mask.repeat_interleave(target // source, dim=axis)
        else:
            if source % target != 0:
                raise ValueError(f"cannot adapt mask of size {source} to {target}")
            step = source // target
            mask = mask[..., ::step, :] if axis == -2 else mask[..., ::step]
    return mask


def build_layer(spec: LayerSpec) -> nn.Module:
    k = spec.kernel
    if spec.kind == LayerKind.CONV:
        return nn.Conv2d(
            spec.in_channels,
            spec.out_channels,
            k,
            stride=spec.stride,
            padding=spec.padding,
            bias=False,
        )
    if spec.kind == LayerKind.DEPTHWISE_CONV:
        return nn.Conv2d(
            spec.in_channels,
            spec.in_channels,
            k,
            stride=spec.stride,
            padding=spec.padding,
            groups=spec.in_channels,
            bias=False,
        )
    if spec.kind == LayerKind.POINTWISE_CONV:
        return nn.Conv2d(spec.in_channels, spec.out_channels, 1, bias=False)
    if spec.kind == LayerKind.MAXPOOL:
        return nn.MaxPool2d(k, stride=spec.stride, padding=spec.padding)
    if spec.kind == LayerKind.BATCHNORM:
        return MaskedBatchNorm2d(spec.in_channels)
    if spec.kind == LayerKind.RELU:
        return nn.ReLU()
    raise ValueError(f"unsupported layer kind '{spec.kind}'")


def separable_block(
    in_channels: int,
    out_channels: int,
    stride: int = 1,
    norm_depthwise: bool = True,
) -> Tuple[LayerSpec, ...]:
    specs = [
        LayerSpec(
            LayerKind.DEPTHWISE_CONV,
            in_channels,
            in_channels,
            kernel=(3, 3),
            stride=stride,
            padding=1,
        )
    ]
    if norm_depthwise:
        specs.append(LayerSpec(LayerKind.BATCHNORM, in_channels, in_channels))
    specs.extend(
        (
            LayerSpec(LayerKind.POINTWISE_CONV, in_channels, out_channels),
            LayerSpec(LayerKind.BATCHNORM, out_channels, out_channels),
            LayerSpec(LayerKind.RELU, out_channels, out_channels),
        )
    )
    return tuple(specs)
