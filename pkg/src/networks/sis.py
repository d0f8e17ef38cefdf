"""Signage sketching network: dual encoders, concatenation fusion, transposed-conv decoder."""
from typing import List, Optional

import torch
import torch.nn as nn

from ..utils.config import SisConfig
from ..utils.exceptions import ShapeMismatchError, InvalidInputShapeError
from ..utils.validators import RasterValidator
from .layers import ConvBlock, UpBlock, as_image_batch, spatial_size

FeaturePyramid = List[torch.Tensor]

EVENT = "event"
THERMAL = "thermal"


class ModalityEncoder(nn.Module):
    """K+1 feature levels; level 0 keeps resolution, every later level halves it."""

    def __init__(self, config: SisConfig):
        super().__init__()
        blocks = []
        for k in range(config.levels + 1):
            in_ch = 1 if k == 0 else config.channels(k - 1)
            blocks.append(ConvBlock(
                in_ch, config.channels(k), stride=1 if k == 0 else 2,
                groups=config.norm_groups, slope=config.negative_slope,
            ))
        self.blocks = nn.ModuleList(blocks)

    def forward(self, x: torch.Tensor) -> FeaturePyramid:
        features = []
        for block in self.blocks:
            x = block(x)
            features.append(x)
        return features


class SisNetwork(nn.Module):
    """Per-frame fusion of an event frame into its thermal frame."""

    def __init__(self, config: Optional[SisConfig] = None):
        super().__init__()
        self.config = config or SisConfig()
        cfg = self.config
        K = cfg.levels
        self.encoder_ev = ModalityEncoder(cfg)
        self.encoder_ir = ModalityEncoder(cfg)

        ups = {}
        for k in range(K, 0, -1):
            # level K holds the fused pair only; lower levels also carry the running decode
            in_ch = 2 * cfg.channels(k) if k == K else 3 * cfg.channels(k)
            ups[str(k)] = UpBlock(in_ch, cfg.channels(k - 1), cfg.norm_groups, cfg.negative_slope)
        self.ups = nn.ModuleDict(ups)
        self.head = nn.Conv2d(3 * cfg.channels(0), 1, kernel_size=3, padding=1)

    @property
    def factor(self) -> int:
        return 2 ** self.config.levels

    def encode(self, frame: torch.Tensor, which: str) -> FeaturePyramid:
        """
        Feature pyramid of one modality.

        Args:
            frame: (B, 1, H, W) raster with H and W divisible by 2^K
            which: "event" or "thermal"

        Raises:
            InvalidInputShapeError: If the size is not divisible by 2^K
        """
        x = as_image_batch(frame, "sis")
        RasterValidator.validate_divisible("sis", spatial_size(x), self.factor)
        if which == EVENT:
            return self.encoder_ev(x)
        if which == THERMAL:
            return self.encoder_ir(x)
        raise ValueError(f"unknown modality {which!r}")

    def fuse_decode(self, pyr_ev: FeaturePyramid, pyr_ir: FeaturePyramid) -> torch.Tensor:
        """
        Decode from the coarsest level down to a (B, 1, H, W) sketch in [0, 1].

        Raises:
            ShapeMismatchError: If the pyramids are not level-wise compatible
        """
        K = self.config.levels
        if len(pyr_ev) != K + 1 or len(pyr_ir) != K + 1:
            raise ShapeMismatchError("feature pyramid levels", (K + 1,), (len(pyr_ev), len(pyr_ir)))
        for f_ev, f_ir in zip(pyr_ev, pyr_ir):
            if f_ev.shape != f_ir.shape:
                raise ShapeMismatchError("feature pyramid level", tuple(f_ir.shape), tuple(f_ev.shape))

        h = torch.cat([pyr_ir[K], pyr_ev[K]], dim=1)
        for k in range(K, 0, -1):
            out = self.ups[str(k)](h)
            h = torch.cat([pyr_ir[k - 1], pyr_ev[k - 1], out], dim=1)
        return torch.sigmoid(self.head(h))

    def forward(self, i_ev: torch.Tensor, i_ir: torch.Tensor) -> torch.Tensor:
        """Sketch of the event content over the thermal frame, shaped like ``i_ir``."""
        ev = as_image_batch(i_ev, "sis")
        ir = as_image_batch(i_ir, "sis")
        if ev.shape != ir.shape:
            raise ShapeMismatchError("sis inputs", tuple(ir.shape), tuple(ev.shape))
        return self.fuse_decode(self.encode(ev, EVENT), self.encode(ir, THERMAL))

    def sketch_frames(self, events: torch.Tensor, thermal: torch.Tensor) -> torch.Tensor:
        """
        Run the network on every frame of a group batch.

        Args:
            events, thermal: (B, T, H, W)

        Returns:
            (B, T, H, W) sketches
        """
        if events.dim() != 4 or events.shape != thermal.shape:
            raise InvalidInputShapeError("sis", f"expected matching (B, T, H, W), got "
                                                f"{tuple(events.shape)} / {tuple(thermal.shape)}")
        b, t, h, w = thermal.shape
        out = self(events.reshape(b * t, 1, h, w), thermal.reshape(b * t, 1, h, w))
        return out.reshape(b, t, h, w)
