"""Construction of the spatial (mask composition) and temporal (warp-and-vote) targets."""
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np
from scipy import ndimage

from ..models.frames import EventFrame, FrameGroup, ThermalFrame
from ..models.geometry import Homography, RigCalibration
from ..models.targets import GroupTargets, SignageMask, SignageRegion, TccTarget
from ..utils.config import EventConfig, PseudoGtConfig
from ..utils.exceptions import OutOfBoundsRegionError
from ..utils.logger import get_logger
from ..utils.raster_io import frame_name, read_gray, write_gray
from ..utils.validators import RasterValidator
from .calib import compose_relative_motion, estimate_thermal_motion
from .events import denoise_spatiotemporal, warp_raster

logger = get_logger("pseudo_gt")

MotionFn = Callable[[ThermalFrame, ThermalFrame], Homography]


def static_motion(frame_prev: ThermalFrame, frame_cur: ThermalFrame) -> Homography:
    """Motion model of a fixed camera."""
    return Homography.identity()


# ============================================================================
# Signage mask
# ============================================================================

def local_variance(pixels: np.ndarray, window: int = 7) -> np.ndarray:
    """Variance over a ``window`` x ``window`` neighbourhood (reflect border)."""
    img = np.asarray(pixels, dtype=np.float64)
    mean = ndimage.uniform_filter(img, size=window, mode="reflect")
    mean_sq = ndimage.uniform_filter(img * img, size=window, mode="reflect")
    return np.maximum(mean_sq - mean * mean, 0.0)


def extract_signage_regions(
    ev: EventFrame,
    ir: ThermalFrame,
    config: Optional[PseudoGtConfig] = None,
    event_config: Optional[EventConfig] = None,
) -> List[SignageRegion]:
    """
    Find event-active components lying on thermally uniform surfaces.

    The event frame is denoised and closed, split into 8-connected
    components, and a component is kept when it is at least ``min_area``
    pixels and ``uniform_fraction`` of its bounding box has local thermal
    variance below ``variance_threshold``.

    Raises:
        ShapeMismatchError: If the frames are not registered to one grid
    """
    cfg = config or PseudoGtConfig()
    ecfg = event_config or EventConfig()
    RasterValidator.validate_same_shape("signage extraction", ev.pixels, ir.pixels)

    cleaned = denoise_spatiotemporal([ev], ecfg.denoise_radius, ecfg.min_support)[0]
    active = (cleaned.pixels > 0).astype(np.uint8)
    if not active.any():
        return []
    active = cv2.morphologyEx(active, cv2.MORPH_CLOSE, np.ones((3, 3), np.uint8))

    flat = local_variance(ir.pixels, cfg.variance_window) < cfg.variance_threshold
    n_labels, labels, stats, _ = cv2.connectedComponentsWithStats(active, connectivity=8)

    regions = []
    for label in range(1, n_labels):
        x, y, w, h, area = (int(v) for v in stats[label])
        if area < cfg.min_area:
            continue
        if flat[y:y + h, x:x + w].mean() < cfg.uniform_fraction:
            continue
        rows, cols = np.nonzero(labels == label)
        regions.append(SignageRegion(rows, cols))

    logger.debug(f"{len(regions)} signage regions from {n_labels - 1} event components")
    return regions


def build_mask(regions: Sequence[SignageRegion], resolution: Tuple[int, int]) -> SignageMask:
    """
    Rasterise the union of regions.

    Args:
        resolution: (width, height)

    Raises:
        OutOfBoundsRegionError: If any region pixel lies outside the raster
    """
    width, height = resolution
    pixels = np.zeros((height, width), dtype=bool)
    for region in regions:
        if len(region.rows) == 0:
            continue
        if (region.rows.min() < 0 or region.cols.min() < 0
                or region.rows.max() >= height or region.cols.max() >= width):
            raise OutOfBoundsRegionError(resolution)
        pixels[region.rows, region.cols] = True
    return SignageMask(pixels, list(regions))


def compose_sis_gt(m: SignageMask, i_ev: EventFrame, i_ir: ThermalFrame) -> np.ndarray:
    """
    Pixelwise ``M * I_EV + (1 - M) * I_IR`` in float32.

    Raises:
        ShapeMismatchError: If the rasters disagree in shape
    """
    RasterValidator.validate_same_shape("spatial target", m.pixels, i_ev.pixels, i_ir.pixels)
    mask = m.as_float()
    one = np.float32(1.0)
    return mask * i_ev.pixels + (one - mask) * i_ir.pixels


# ============================================================================
# Warp-and-vote target
# ============================================================================

def vote_frames(binary_frames: Sequence[np.ndarray], vote_threshold: float) -> np.ndarray:
    """Pixels whose vote count exceeds ``vote_threshold``."""
    votes = np.sum([np.asarray(b, dtype=np.int32) for b in binary_frames], axis=0)
    return votes > vote_threshold


def build_tcc_gt(
    ev_frames: Sequence[EventFrame],
    ir_frames: Sequence[ThermalFrame],
    rig: RigCalibration,
    t: int,
    motion_fn: Optional[MotionFn] = None,
    config: Optional[PseudoGtConfig] = None,
    event_config: Optional[EventConfig] = None,
) -> TccTarget:
    """
    Warp every other event frame of the group to instant ``t`` and vote.

    Each frame t' != t is binarised, moved by the thermal motion t'->t
    transferred to the event camera, and thresholded at half occupancy; the
    target's own binarised frame is added once. A pixel is set when its vote
    exceeds ``vote_threshold`` (T/2 by default), then isolated pixels are
    removed.

    Args:
        ev_frames: T event frames on the event camera's grid
        ir_frames: T thermal frames of the same instants
        t: 1-based index of the target frame

    Raises:
        ValueError: If ``t`` is outside [1, T]
        GeometryError: If motion estimation fails on any pair
    """
    cfg = config or PseudoGtConfig()
    ecfg = event_config or EventConfig()
    n = len(ev_frames)
    if n < 1 or len(ir_frames) != n:
        raise ValueError(f"need matching non-empty stacks, got {n} event / {len(ir_frames)} thermal")
    if not 1 <= t <= n:
        raise ValueError(f"target index {t} outside [1, {n}]")
    motion_fn = motion_fn or estimate_thermal_motion
    threshold = cfg.vote_threshold if cfg.vote_threshold is not None else n / 2.0

    target = ev_frames[t - 1]
    ballots = [target.pixels > 0]
    for k in range(n):
        if k == t - 1:
            continue
        h_ev = compose_relative_motion(motion_fn(ir_frames[k], ir_frames[t - 1]), rig)
        moved = warp_raster((ev_frames[k].pixels > 0).astype(np.float32), h_ev)
        ballots.append(moved >= 0.5)

    pixels = vote_frames(ballots, threshold).astype(np.float32)
    if cfg.denoise:
        pixels = denoise_spatiotemporal(
            [target.with_pixels(pixels)], ecfg.denoise_radius, ecfg.min_support
        )[0].pixels
    return TccTarget(pixels, t, n, threshold)


def build_group_targets(
    group: FrameGroup,
    motion_fn: Optional[MotionFn] = None,
    config: Optional[PseudoGtConfig] = None,
    event_config: Optional[EventConfig] = None,
) -> GroupTargets:
    """
    Masks and spatial targets for every frame, temporal target for the last.

    All targets are expressed on the thermal grid.
    """
    cfg = config or PseudoGtConfig()
    masks, sis_gt = [], []
    for ev, ir in zip(group.registered_events, group.thermal):
        mask = build_mask(extract_signage_regions(ev, ir, cfg, event_config), ir.resolution)
        masks.append(mask)
        sis_gt.append(compose_sis_gt(mask, ev, ir))

    tcc = build_tcc_gt(group.events, group.thermal, group.rig, len(group), motion_fn, cfg, event_config)
    if not group.rig.is_shared_sensor:
        on_ir = warp_raster(tcc.pixels, group.rig.h_ev_to_ir, group.rig.ir_resolution)
        tcc = TccTarget(on_ir >= 0.5, tcc.t_index, tcc.T, tcc.vote_threshold)
    return GroupTargets(masks, sis_gt, tcc)


# ============================================================================
# Cache
# ============================================================================

def write_cache(scene_dir: Union[str, Path], frame_indices: Sequence[int], targets: GroupTargets) -> None:
    """Store one group's targets under ``masks/``, ``sis_gt/`` and ``tcc_gt/``."""
    scene_dir = Path(scene_dir)
    for index, mask, gt in zip(frame_indices, targets.masks, targets.sis_gt):
        write_gray(scene_dir / "masks" / frame_name(index), mask.as_float())
        write_gray(scene_dir / "sis_gt" / frame_name(index), gt)
    write_gray(scene_dir / "tcc_gt" / frame_name(frame_indices[-1]), targets.tcc_gt.pixels)


def read_cache(scene_dir: Union[str, Path], frame_indices: Sequence[int]) -> Optional[GroupTargets]:
    """Load a cached group, or None when any of its files is missing."""
    scene_dir = Path(scene_dir)
    paths = [scene_dir / d / frame_name(i) for d in ("masks", "sis_gt") for i in frame_indices]
    tcc_path = scene_dir / "tcc_gt" / frame_name(frame_indices[-1])
    if not tcc_path.is_file() or not all(p.is_file() for p in paths):
        return None

    masks = [SignageMask(read_gray(scene_dir / "masks" / frame_name(i)) >= 0.5) for i in frame_indices]
    sis_gt = [read_gray(scene_dir / "sis_gt" / frame_name(i)) for i in frame_indices]
    n = len(frame_indices)
    tcc = TccTarget(read_gray(tcc_path) >= 0.5, n, n, n / 2.0)
    return GroupTargets(masks, sis_gt, tcc)
