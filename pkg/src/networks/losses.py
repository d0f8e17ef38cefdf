"""Training objectives: spatial and temporal L1, masked perceptual, Laplacian gradient."""
from typing import Dict, List, Mapping, Optional, Sequence, Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..models.reports import FrameLoss, LossReport, LOSS_COLUMNS
from ..utils.config import LossWeights
from ..utils.exceptions import ShapeMismatchError
from .layers import as_image_batch

LAPLACIAN = ((0.0, 1.0, 0.0), (1.0, -4.0, 1.0), (0.0, 1.0, 0.0))

Number = Union[float, torch.Tensor]


def _check_shapes(what: str, pred: torch.Tensor, target: torch.Tensor) -> None:
    if pred.shape != target.shape:
        raise ShapeMismatchError(what, tuple(target.shape), tuple(pred.shape))


def l_sis(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference to the spatial target."""
    _check_shapes("l_sis", pred, target)
    return (pred - target).abs().mean()


def l_tcc(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference to the binary temporal target."""
    _check_shapes("l_tcc", pred, target)
    return (pred - target).abs().mean()


def laplacian(x: torch.Tensor) -> torch.Tensor:
    """4-neighbour Laplacian with reflect padding on a (B, 1, H, W) batch."""
    kernel = torch.tensor(LAPLACIAN, dtype=x.dtype, device=x.device)[None, None]
    return F.conv2d(F.pad(x, (1, 1, 1, 1), mode="reflect"), kernel)


def l_gradient(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference of Laplacian responses."""
    _check_shapes("l_gradient", pred, target)
    p = as_image_batch(pred, "l_gradient")
    t = as_image_batch(target, "l_gradient")
    return (laplacian(p) - laplacian(t)).abs().mean()


class PerceptualExtractor(nn.Module):
    """
    Frozen three-depth convolutional pyramid with fixed-seed random weights.

    Depth d works at 1/2^d resolution.
    """

    def __init__(self, channels: Sequence[int] = (8, 16, 32), seed: int = 1234, slope: float = 0.2):
        super().__init__()
        generator = torch.Generator().manual_seed(seed)
        convs = []
        in_ch = 1
        for out_ch in channels:
            conv = nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1)
            fan_in = in_ch * 9
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=generator) * (2.0 / fan_in) ** 0.5)
                conv.bias.zero_()
            convs.append(conv)
            in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        self.slope = slope
        for p in self.parameters():
            p.requires_grad_(False)

    @property
    def depths(self) -> int:
        return len(self.convs)

    def forward(self, x: torch.Tensor):
        feats = []
        for d, conv in enumerate(self.convs):
            if d > 0:
                x = F.avg_pool2d(x, 2)
            x = F.leaky_relu(conv(x), self.slope)
            feats.append(x)
        return feats

    def inside_masks(self, mask: torch.Tensor) -> List[torch.Tensor]:
        """
        Per-depth masks of feature positions whose receptive field lies inside ``mask``.

        Mirrors ``forward``: every pooling and every 3x3 convolution is a
        min-pool over the same window. Positions beyond the image border are
        neutral, since both inputs see the same zero padding there.
        """
        masks = []
        m = mask
        for d in range(self.depths):
            if d > 0:
                m = -F.max_pool2d(-m, 2)
            m = -F.max_pool2d(-m, 3, stride=1, padding=1)
            masks.append(m)
        return masks


def l_perceptual(
    pred: torch.Tensor,
    target: torch.Tensor,
    mask: torch.Tensor,
    extractor: PerceptualExtractor,
) -> torch.Tensor:
    """
    Feature-space L1 restricted to the signage mask, summed over extractor depths.

    A feature position counts only when its whole receptive field lies inside
    the mask, so pixels outside the mask never change the value. Each depth's
    difference is averaged over those positions; an empty mask gives 0.
    """
    _check_shapes("l_perceptual", pred, target)
    p = as_image_batch(pred, "l_perceptual")
    t = as_image_batch(target, "l_perceptual")
    m = as_image_batch(mask.to(p.dtype), "l_perceptual mask")
    if m.shape != p.shape:
        raise ShapeMismatchError("l_perceptual mask", tuple(p.shape), tuple(m.shape))

    total = p.new_zeros(())
    if float(m.sum()) == 0.0:
        return total
    for fp, ft, inside in zip(extractor(p), extractor(t), extractor.inside_masks(m)):
        area = inside.sum() * fp.shape[1]
        if float(area) == 0.0:
            continue
        total = total + ((fp - ft).abs() * inside).sum() / area
    return total


def total_loss(
    per_frame: Sequence[Mapping[str, Number]],
    weights: Optional[LossWeights] = None,
) -> LossReport:
    """
    Sum the per-frame terms into a report.

    Terms are accumulated frame by frame in a fixed order; missing terms
    count as 0. Component fields are unweighted, ``total`` applies ``weights``
    (all 1 by default, i.e. a plain sum).
    """
    w = weights or LossWeights()
    scale = {"l_sis": w.sis, "l_tcc": w.tcc, "l_per": w.per, "l_grad": w.grad}

    sums: Dict[str, float] = {k: 0.0 for k in LOSS_COLUMNS}
    total = 0.0
    total_tensor = None
    frames = []
    for t, terms in enumerate(per_frame, start=1):
        row = FrameLoss(t)
        for key in LOSS_COLUMNS:
            value = terms.get(key)
            if value is None:
                continue
            as_float = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
            setattr(row, key, as_float)
            sums[key] += as_float
            total += scale[key] * as_float
            if isinstance(value, torch.Tensor):
                weighted = value * scale[key]
                total_tensor = weighted if total_tensor is None else total_tensor + weighted
        frames.append(row)

    return LossReport(frames=frames, total=total, total_tensor=total_tensor, **sums)


class GroupObjective:
    """
    Loss of one group batch.

    The spatial term applies to every sketch, the temporal term to the
    corrected last frame; perceptual and gradient terms compare each frame's
    final output (corrected for the last frame, sketch otherwise) to its
    spatial target inside the signage mask.
    """

    def __init__(self, extractor: Optional[PerceptualExtractor] = None, weights: Optional[LossWeights] = None):
        self.extractor = extractor or PerceptualExtractor()
        self.weights = weights or LossWeights()

    def __call__(
        self,
        sketches: torch.Tensor,
        corrected: torch.Tensor,
        sis_gt: torch.Tensor,
        tcc_gt: torch.Tensor,
        masks: torch.Tensor,
    ) -> LossReport:
        """
        Args:
            sketches: (B, T, H, W) per-frame sketches
            corrected: (B, H, W) corrected last frame
            sis_gt, masks: (B, T, H, W)
            tcc_gt: (B, H, W)
        """
        _check_shapes("group sketches", sketches, sis_gt)
        _check_shapes("group masks", masks, sis_gt)
        n = sketches.shape[1]
        per_frame = []
        for t in range(n):
            last = t == n - 1
            final = corrected if last else sketches[:, t]
            terms = {
                "l_sis": l_sis(sketches[:, t], sis_gt[:, t]),
                "l_per": l_perceptual(final, sis_gt[:, t], masks[:, t], self.extractor),
                "l_grad": l_gradient(final, sis_gt[:, t]),
            }
            if last:
                terms["l_tcc"] = l_tcc(corrected, tcc_gt)
            per_frame.append(terms)
        return total_loss(per_frame, self.weights)
