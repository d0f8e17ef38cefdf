"""Shared building blocks."""
import math
from typing import Tuple

import torch
import torch.nn as nn

from ..utils.exceptions import InvalidInputShapeError


def norm_groups(channels: int, groups: int) -> int:
    """Largest group count dividing ``channels`` that divides ``groups`` too."""
    return math.gcd(groups, channels)


class ConvBlock(nn.Sequential):
    """3x3 convolution, group norm, leaky rectifier."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1, groups: int = 8, slope: float = 0.2):
        super().__init__(
            nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1),
            nn.GroupNorm(norm_groups(out_ch, groups), out_ch),
            nn.LeakyReLU(slope),
        )


class UpBlock(nn.Sequential):
    """2x transposed convolution, group norm, leaky rectifier."""

    def __init__(self, in_ch: int, out_ch: int, groups: int = 8, slope: float = 0.2):
        super().__init__(
            nn.ConvTranspose2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1),
            nn.GroupNorm(norm_groups(out_ch, groups), out_ch),
            nn.LeakyReLU(slope),
        )


def as_image_batch(x: torch.Tensor, name: str) -> torch.Tensor:
    """Accept (H, W), (B, H, W) or (B, 1, H, W) and return (B, 1, H, W)."""
    if x.dim() == 2:
        return x[None, None]
    if x.dim() == 3:
        return x[:, None]
    if x.dim() == 4 and x.shape[1] == 1:
        return x
    raise InvalidInputShapeError(name, f"expected a single-channel raster batch, got {tuple(x.shape)}")


def parameter_count(module: nn.Module) -> int:
    """Number of trainable parameters."""
    return sum(p.numel() for p in module.parameters() if p.requires_grad)


def zero_biases(module: nn.Module) -> None:
    """Set every bias of ``module`` to zero."""
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("bias"):
                p.zero_()


def spatial_size(x: torch.Tensor) -> Tuple[int, int]:
    return int(x.shape[-2]), int(x.shape[-1])
