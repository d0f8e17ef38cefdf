"""Temporal consistency network: deformable alignment, shifted-window video attention, 2D decode."""
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F
from torchvision.ops import DeformConv2d

from ..utils.config import TccConfig
from ..utils.exceptions import InvalidInputShapeError, WindowSizeError

Triple = Tuple[int, int, int]

MASK_VALUE = -100.0


# ============================================================================
# Window bookkeeping
# ============================================================================

def fit_window(volume: Triple, window: Triple, shift: Triple) -> Tuple[Triple, Triple]:
    """Clamp the window to small volumes; no shift along a clamped axis."""
    w, s = list(window), list(shift)
    for i in range(3):
        if volume[i] <= window[i]:
            w[i] = volume[i]
            s[i] = 0
    return tuple(w), tuple(s)


def window_partition(x: torch.Tensor, window: Triple) -> torch.Tensor:
    """
    Split (B, D, H, W, C) into (B * nW, Md * Mh * Mw, C) windows.

    Raises:
        WindowSizeError: If the volume is not a whole number of windows
    """
    b, d, h, w, c = x.shape
    md, mh, mw = window
    if md > d or mh > h or mw > w or d % md or h % mh or w % mw:
        raise WindowSizeError(window, (d, h, w))
    x = x.view(b, d // md, md, h // mh, mh, w // mw, mw, c)
    return x.permute(0, 1, 3, 5, 2, 4, 6, 7).reshape(-1, md * mh * mw, c)


def window_reverse(windows: torch.Tensor, window: Triple, b: int, d: int, h: int, w: int) -> torch.Tensor:
    """Inverse of :func:`window_partition`."""
    md, mh, mw = window
    x = windows.view(b, d // md, h // mh, w // mw, md, mh, mw, -1)
    return x.permute(0, 1, 4, 2, 5, 3, 6, 7).reshape(b, d, h, w, -1)


def roll_volume(x: torch.Tensor, shift: Triple, inverse: bool = False) -> torch.Tensor:
    """Cyclic roll of a (B, D, H, W, C) volume by -shift (or +shift when ``inverse``)."""
    sign = 1 if inverse else -1
    return torch.roll(x, shifts=tuple(sign * s for s in shift), dims=(1, 2, 3))


def shifted_window_mask(volume: Triple, window: Triple, shift: Triple, device=None) -> torch.Tensor:
    """
    Additive mask keeping attention inside regions that were contiguous before the roll.

    Returns:
        (nW, N, N) tensor of 0 / -100
    """
    img = torch.zeros((1, *volume, 1), device=device)
    segments = []
    for size, s in zip(window, shift):
        segments.append((slice(0, -size), slice(-size, -s), slice(-s, None)) if s > 0 else (slice(None),))
    label = 0
    for sd in segments[0]:
        for sh in segments[1]:
            for sw in segments[2]:
                img[:, sd, sh, sw, :] = label
                label += 1
    labels = window_partition(img, window).squeeze(-1)
    diff = labels.unsqueeze(1) - labels.unsqueeze(2)
    return torch.zeros_like(diff).masked_fill(diff != 0, MASK_VALUE)


# ============================================================================
# Attention
# ============================================================================

class WindowAttention(nn.Module):
    """Multi-head scaled dot-product self-attention inside each window."""

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads:
            raise InvalidInputShapeError("window attention", f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)

    def _qkv(self, x: torch.Tensor):
        b, n, c = x.shape
        qkv = self.qkv(x).reshape(b, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        return qkv[0], qkv[1], qkv[2]

    def attention_weights(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        """Row-stochastic (B*nW, heads, N, N) attention of the windows ``x``."""
        q, k, _ = self._qkv(x)
        return self._softmax(q, k, mask)

    def _softmax(self, q, k, mask):
        attn = (q * self.scale) @ k.transpose(-2, -1)
        if mask is not None:
            nw = mask.shape[0]
            b_, h, n, _ = attn.shape
            attn = attn.view(b_ // nw, nw, h, n, n) + mask[None, :, None]
            attn = attn.view(b_, h, n, n)
        return attn.softmax(dim=-1)

    def forward(self, x: torch.Tensor, mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        b, n, c = x.shape
        q, k, v = self._qkv(x)
        out = (self._softmax(q, k, mask) @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class WindowAttentionBlock(nn.Module):
    """
    y = x + unroll(attention(roll(norm(x)))), then y + mlp(norm(y)), over
    (B, D, H, W, C) volumes.

    ``shift`` of zero gives the plain (non-shifted) block.
    """

    def __init__(self, dim: int, heads: int, window: Triple, shift: Triple = (0, 0, 0), mlp_ratio: float = 4.0):
        super().__init__()
        self.window = tuple(window)
        self.shift = tuple(shift)
        self.norm = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, heads)
        hidden = int(dim * mlp_ratio)
        self.mlp_norm = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, d, h, w, c = x.shape
        window, shift = fit_window((d, h, w), self.window, self.shift)

        y = self.norm(x)
        pd, ph, pw = ((-d) % window[0], (-h) % window[1], (-w) % window[2])
        y = F.pad(y, (0, 0, 0, pw, 0, ph, 0, pd))
        dp, hp, wp = d + pd, h + ph, w + pw

        shifted = any(shift)
        mask = None
        if shifted:
            y = roll_volume(y, shift)
            mask = shifted_window_mask((dp, hp, wp), window, shift, y.device).to(y.dtype)

        out = window_reverse(self.attn(window_partition(y, window), mask), window, b, dp, hp, wp)
        if shifted:
            out = roll_volume(out, shift, inverse=True)
        x = x + out[:, :d, :h, :w, :]
        return x + self.mlp(self.mlp_norm(x))


class PatchMerging(nn.Module):
    """2x2 spatial downsampling with channel doubling."""

    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h, w = x.shape[2], x.shape[3]
        if h % 2 or w % 2:
            x = F.pad(x, (0, 0, 0, w % 2, 0, h % 2))
        x = torch.cat([
            x[:, :, 0::2, 0::2], x[:, :, 1::2, 0::2],
            x[:, :, 0::2, 1::2], x[:, :, 1::2, 1::2],
        ], dim=-1)
        return self.reduction(self.norm(x))


class SwinStage(nn.Module):
    """Cascade of window attention blocks, all shifted but the last, then optional merging."""

    def __init__(self, dim: int, depth: int, heads: int, window: Triple, downsample: bool):
        super().__init__()
        half = tuple(m // 2 for m in window)
        self.blocks = nn.ModuleList([
            WindowAttentionBlock(dim, heads, window, (0, 0, 0) if i == depth - 1 else half)
            for i in range(depth)
        ])
        self.downsample = PatchMerging(dim) if downsample else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for block in self.blocks:
            x = block(x)
        return self.downsample(x) if self.downsample is not None else x


# ============================================================================
# Alignment
# ============================================================================

class DeformAlign(nn.Module):
    """Deformable convolution of every sketch, with offsets predicted against the target frame."""

    def __init__(self, embed_dim: int, kernel_size: int = 3):
        super().__init__()
        self.kernel_size = kernel_size
        self.offset_conv = nn.Conv2d(2, 2 * kernel_size * kernel_size, 3, padding=1)
        nn.init.zeros_(self.offset_conv.weight)
        nn.init.zeros_(self.offset_conv.bias)
        self.deform = DeformConv2d(1, embed_dim, kernel_size, padding=kernel_size // 2)

    def offsets(self, frames: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        """(B, 2*k*k, H, W) sampling offsets as (dy, dx) pairs per kernel tap."""
        return self.offset_conv(torch.cat([frames, targets], dim=1))

    def align_frame(self, frames: torch.Tensor, targets: torch.Tensor,
                    offsets: Optional[torch.Tensor] = None) -> torch.Tensor:
        if offsets is None:
            offsets = self.offsets(frames, targets)
        return self.deform(frames, offsets)

    def forward(self, volume: torch.Tensor) -> torch.Tensor:
        """(B, N, H, W) sketches -> (B, N, H, W, C) aligned features."""
        b, n, h, w = volume.shape
        frames = volume.reshape(b * n, 1, h, w)
        targets = volume[:, -1:].expand(b, n, h, w).reshape(b * n, 1, h, w)
        feats = self.align_frame(frames, targets)
        return feats.reshape(b, n, -1, h, w).permute(0, 1, 3, 4, 2)


# ============================================================================
# Network
# ============================================================================

class TccNetwork(nn.Module):
    """Refine the newest sketch of a volume using the N - 1 preceding ones."""

    def __init__(self, config: Optional[TccConfig] = None):
        super().__init__()
        self.config = config or TccConfig()
        cfg = self.config
        embed = cfg.embed_dim
        self.align = DeformAlign(embed)
        self.stages = nn.ModuleList([
            SwinStage(cfg.stage_dim(i), cfg.stage_depths[i], cfg.heads[i], cfg.window, downsample=i < 3)
            for i in range(4)
        ])
        out_dim = cfg.stage_dim(3)
        self.out_norm = nn.LayerNorm(out_dim)
        self.reduce = nn.Conv2d(out_dim, embed, kernel_size=1)
        self.fuse = nn.Linear(2 * embed, embed)
        dw = cfg.decoder_window
        self.decoder_attn = WindowAttentionBlock(embed, cfg.decoder_heads, (1, dw, dw))
        self.head = nn.Linear(embed, 1)

    def deform_align(self, volume: torch.Tensor) -> torch.Tensor:
        return self.align(volume)

    def encode(self, f_d: torch.Tensor) -> torch.Tensor:
        """Four attention stages over (B, N, H, W, C) -> (B, N, H/8, W/8, 8C)."""
        x = f_d
        for stage in self.stages:
            x = stage(x)
        return x

    def decode_target(self, f_out: torch.Tensor, f_target: torch.Tensor) -> torch.Tensor:
        """
        Temporal mean, upsampling and 2D window attention down to one frame.

        Args:
            f_out: (B, N, h, w, C4) output of the last stage
            f_target: (B, H, W, C) aligned features of the target frame

        Returns:
            (B, H, W) in [0, 1]
        """
        size = (f_target.shape[1], f_target.shape[2])
        avg = self.out_norm(f_out).mean(dim=1).permute(0, 3, 1, 2)
        up = F.interpolate(self.reduce(avg), size=size, mode="bilinear", align_corners=False)
        x = self.fuse(torch.cat([up.permute(0, 2, 3, 1), f_target], dim=-1))
        x = self.decoder_attn(x[:, None])[:, 0]
        return torch.sigmoid(self.head(x)).squeeze(-1)

    def forward(self, volume: torch.Tensor) -> torch.Tensor:
        """
        Args:
            volume: (B, N, H, W) or (N, H, W) sketches, oldest first

        Returns:
            (B, H, W) corrected newest frame (unbatched input gives (H, W))
        """
        unbatched = volume.dim() == 3
        if unbatched:
            volume = volume[None]
        if volume.dim() != 4 or volume.shape[1] < 1:
            raise InvalidInputShapeError("tcc", f"expected (B, N, H, W), got {tuple(volume.shape)}")
        f_d = self.deform_align(volume)
        out = self.decode_target(self.encode(f_d), f_d[:, -1])
        return out[0] if unbatched else out

    def stage_block_counts(self) -> List[int]:
        return [len(stage.blocks) for stage in self.stages]
