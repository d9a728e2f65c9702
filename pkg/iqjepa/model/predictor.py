import torch
from iqjepa.model.encoder import MaskLike, mask_tensor
from iqjepa.model.layers import build_layer, separable_block
from torch import nn

MASK_TOKEN_STD = 0.02
PREDICTOR_DEPTH = 3


class Predictor(nn.Module):
    def __init__(self, channels: int, depth: int = PREDICTOR_DEPTH) -> None:
        super().__init__()
        if depth < 1:
            raise ValueError("predictor needs at least one block")
        self.channels = channels
        specs = [
            spec
            for _ in range(depth)
            for spec in separable_block(channels, channels, norm_depthwise=False)
        ]
        self.layers = nn.Sequential(*(build_layer(s) for s in specs))

    def forward(self, h_tilde: torch.Tensor) -> torch.Tensor:
        if h_tilde.dim() != 4 or h_tilde.shape[1] != self.channels:
            raise ValueError(
                f"expected latent (B, {self.channels}, h, w), "
                f"got {tuple(h_tilde.shape)}"
            )
        return self.layers(h_tilde)


class MaskToken(nn.Module):
    def __init__(self, channels: int, std: float = MASK_TOKEN_STD) -> None:
        super().__init__()
        self.z = nn.Parameter(torch.randn(channels) * std)

    def forward(self, h: torch.Tensor, masks: MaskLike) -> torch.Tensor:
        return insert_mask_token(h, masks, self)


def insert_mask_token(
    h: torch.Tensor,
    masks: MaskLike,
    tok: MaskToken,
) -> torch.Tensor:
    m = mask_tensor(masks, dtype=h.dtype)
    if tuple(m.shape[-2:]) != tuple(h.shape[-2:]):
        raise ValueError("mask size does not match the latent grid")
    z = tok.z.to(h.dtype)[None, :, None, None]
    return torch.where(m > 0, h, z)
