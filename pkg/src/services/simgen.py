"""Synthetic thermal/event scene generation."""
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union, Dict, Any

import cv2
import numpy as np

from ..models.frames import EventStream, FrameClock, FrameGroup, ThermalFrame
from ..models.geometry import RigCalibration
from ..utils.config import SimConfig
from ..utils.exceptions import (
    InsufficientFramesError,
    NonMonotonicTimestampsError,
    FileOperationError,
)
from ..utils.logger import get_logger, PipelineLogger
from ..utils.raster_io import write_gray, frame_name
from ..utils.validators import RasterValidator
from .calib import save_rig
from .events import stream_to_frames, write_events, DEFAULT_GAIN

logger = get_logger("simgen")

# Rec.601 luma weights
LUMA = np.array([0.299, 0.587, 0.114])

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


# ============================================================================
# Sensor proxies
# ============================================================================

def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luminance of an (H, W, 3) frame; grayscale input passes through."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    return arr[..., :3] @ LUMA


def rgb_to_pseudo_thermal(
    rgb: np.ndarray,
    quant_levels: int = 16,
    blur_sigma: float = 1.0,
) -> ThermalFrame:
    """
    Approximate a thermal frame from a colour frame.

    Luminance is quantised into ``quant_levels`` bands (surfaces of one
    material collapse to one level), blurred and stretched back to [0, 1].
    """
    RasterValidator.validate_unit_raster("rgb frame", rgb, ndim=np.ndim(rgb))
    y = luminance(rgb)
    bands = np.minimum(np.floor(y * quant_levels), quant_levels - 1) / (quant_levels - 1)
    if blur_sigma > 0:
        bands = cv2.GaussianBlur(bands, (0, 0), blur_sigma, borderType=cv2.BORDER_REFLECT)
    lo, hi = float(bands.min()), float(bands.max())
    if hi - lo <= 1e-6:
        return ThermalFrame(np.full(bands.shape, np.clip(lo, 0.0, 1.0), dtype=np.float32))
    return ThermalFrame(((bands - lo) / (hi - lo)).astype(np.float32))


def event_intensity(rgb: np.ndarray) -> np.ndarray:
    """
    Intensity seen by the event sensor: the brightest colour channel.

    Unlike the luma weighting above, an equal-luminance coloured glyph keeps
    a contrast against its plate here.
    """
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    return arr[..., :3].max(axis=-1)


# ============================================================================
# Event synthesis
# ============================================================================

def synthesize_events(
    frames: Sequence[np.ndarray],
    timestamps: Sequence[int],
    config: Optional[SimConfig] = None,
) -> EventStream:
    """
    Contrast-threshold event model on log intensity.

    Every pixel keeps a reference level; one event of polarity sign(delta)
    fires per whole contrast step crossed, the reference moving with it.
    Event times are interpolated linearly between frame times and stay
    strictly before the later frame.

    Args:
        frames: (T, H, W) intensities in [0, 1]
        timestamps: T strictly increasing frame times in microseconds

    Raises:
        NonMonotonicTimestampsError: If timestamps do not strictly increase
    """
    cfg = config or SimConfig()
    stack = np.stack([np.asarray(f, dtype=np.float64) for f in frames])
    ts = np.asarray(timestamps, dtype=np.int64)
    if len(ts) != len(stack):
        raise ValueError(f"{len(stack)} frames but {len(ts)} timestamps")
    steps = np.diff(ts)
    if (steps <= 0).any():
        raise NonMonotonicTimestampsError(int(np.flatnonzero(steps <= 0)[0]) + 1)

    log_i = np.log(stack + cfg.eps).reshape(len(stack), -1)
    # levels in whole contrast steps relative to the first frame
    levels = (log_i - log_i[0]) / cfg.contrast_threshold
    ref = np.zeros(levels.shape[1], dtype=np.float64)
    width = stack.shape[2]

    chunks: List[EventStream] = []
    for k in range(1, len(stack)):
        prev, cur = levels[k - 1], levels[k]
        delta = cur - ref
        n = np.floor(np.abs(delta) + 1e-9).astype(np.int64)
        fired = np.flatnonzero(n > 0)
        if len(fired) == 0:
            continue
        sign = np.sign(delta[fired])
        counts = n[fired]
        span = (cur - prev)[fired]
        base = ref[fired]
        start = prev[fired]

        t_list, pix_list, pol_list = [], [], []
        for j in range(1, int(counts.max()) + 1):
            sel = counts >= j
            crossing = base[sel] + sign[sel] * j
            with np.errstate(divide="ignore", invalid="ignore"):
                alpha = np.where(span[sel] != 0, (crossing - start[sel]) / span[sel], 1.0)
            alpha = np.clip(alpha, 0.0, 1.0)
            t = ts[k - 1] + np.floor(alpha * steps[k - 1]).astype(np.int64)
            t_list.append(np.minimum(t, ts[k] - 1))
            pix_list.append(fired[sel])
            pol_list.append(sign[sel])

        t_all = np.concatenate(t_list)
        pix = np.concatenate(pix_list)
        order = np.argsort(t_all, kind="stable")
        chunks.append(EventStream(
            t_all[order], pix[order] % width, pix[order] // width,
            np.concatenate(pol_list)[order].astype(np.int8),
        ))
        ref[fired] += sign * counts

    return EventStream.concatenate(chunks)


def frame_times(n_frames: int, window_us: int, t0: int = 0) -> np.ndarray:
    """Thermal frame k is stamped at the end of event window k."""
    return t0 + window_us * np.arange(1, n_frames + 1, dtype=np.int64)


def make_group(
    frames: Sequence[np.ndarray],
    config: Optional[SimConfig] = None,
    rig: Optional[RigCalibration] = None,
    gain: float = DEFAULT_GAIN,
) -> FrameGroup:
    """
    Build one aligned (thermal, event) group from the first ``group_len`` frames.

    Raises:
        InsufficientFramesError: If fewer than ``group_len`` frames are given
    """
    cfg = config or SimConfig()
    if len(frames) < cfg.group_len:
        raise InsufficientFramesError(len(frames), cfg.group_len)
    frames = list(frames)[:cfg.group_len]

    thermal = [rgb_to_pseudo_thermal(f, cfg.quant_levels, cfg.blur_sigma) for f in frames]
    intensities = [event_intensity(f) for f in frames]
    ts = frame_times(len(frames), cfg.window_us)
    for frame, t in zip(thermal, ts):
        frame.t_us = int(t)

    stream = synthesize_events(intensities, ts, cfg)
    height, width = thermal[0].shape
    clock = FrameClock(cfg.window_us, 0)
    events = stream_to_frames(stream, clock, len(frames), (width, height), gain)
    rig = rig or RigCalibration.shared_sensor((width, height))
    return FrameGroup(thermal, events, rig)


# ============================================================================
# Synthetic signage scenes
# ============================================================================

# Plate and glyph share a luminance band but differ in their brightest channel.
BACKGROUND_RGB = (0.32, 0.32, 0.32)
PLATE_RGB = (0.5, 0.5, 0.5)
GLYPH_RGB = (0.9, 0.35, 0.45)
CLUTTER_LEVELS = (0.08, 0.18, 0.7, 0.85, 0.95)


def render_signage_scene(
    n_frames: int,
    size: Tuple[int, int] = (128, 128),
    pan_px_per_frame: int = 2,
    seed: int = 0,
    glyph_text: str = "STOP",
    n_clutter: int = 12,
) -> List[np.ndarray]:
    """
    Render a panning RGB sequence with a sign whose glyph is thermally invisible.

    Args:
        n_frames: Number of frames
        size: (width, height) of each frame
        pan_px_per_frame: Horizontal camera pan; scene content moves left

    Returns:
        List of (H, W, 3) float32 frames in [0, 1]
    """
    width, height = size
    rng = np.random.default_rng(seed)
    margin = 8
    canvas_w = width + pan_px_per_frame * max(n_frames - 1, 0) + 2 * margin
    canvas = np.empty((height, canvas_w, 3), dtype=np.float32)
    canvas[:] = BACKGROUND_RGB

    for _ in range(n_clutter):
        w = int(rng.integers(max(4, width // 16), max(5, width // 5)))
        h = int(rng.integers(max(4, height // 16), max(5, height // 5)))
        x = int(rng.integers(0, max(1, canvas_w - w)))
        y = int(rng.integers(0, max(1, height - h)))
        level = float(rng.choice(CLUTTER_LEVELS))
        canvas[y:y + h, x:x + w] = level

    plate_w, plate_h = int(width * 0.6), int(height * 0.3)
    px = margin + (pan_px_per_frame * max(n_frames - 1, 0)) // 2 + (width - plate_w) // 2
    py = (height - plate_h) // 2
    canvas[py:py + plate_h, px:px + plate_w] = PLATE_RGB

    font = cv2.FONT_HERSHEY_SIMPLEX
    thickness = max(2, height // 48)
    (tw, th), _ = cv2.getTextSize(glyph_text, font, 1.0, thickness)
    scale = min(0.85 * plate_w / tw, 0.7 * plate_h / th)
    (tw, th), _ = cv2.getTextSize(glyph_text, font, scale, thickness)
    origin = (px + (plate_w - tw) // 2, py + (plate_h + th) // 2)
    # text drawing needs an 8-bit image; LINE_8 keeps the stroke binary
    glyph = np.zeros((height, canvas_w), dtype=np.uint8)
    cv2.putText(glyph, glyph_text, origin, font, scale, 255, thickness, cv2.LINE_8)
    canvas[glyph > 0] = GLYPH_RGB

    frames = []
    for k in range(n_frames):
        x0 = margin + pan_px_per_frame * k
        frames.append(canvas[:, x0:x0 + width].copy())
    return frames


def read_rgb_frames(source: Union[str, Path], limit: Optional[int] = None) -> List[np.ndarray]:
    """
    Load RGB frames from an image directory or a video file.

    Raises:
        FileOperationError: If nothing readable is found
    """
    source = Path(source)
    frames: List[np.ndarray] = []
    if source.is_dir():
        for path in sorted(p for p in source.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES):
            bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
            if bgr is None:
                logger.warning(f"Skipping unreadable image {path}")
                continue
            frames.append(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0)
            if limit and len(frames) >= limit:
                break
    elif source.is_file():
        capture = cv2.VideoCapture(str(source))
        try:
            while not limit or len(frames) < limit:
                ok, bgr = capture.read()
                if not ok:
                    break
                frames.append(cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB).astype(np.float32) / 255.0)
        finally:
            capture.release()
    if not frames:
        raise FileOperationError("read", str(source), "no frames found")
    return frames


def write_scene(
    scene_dir: Union[str, Path],
    frames: Sequence[np.ndarray],
    config: Optional[SimConfig] = None,
    gain: float = DEFAULT_GAIN,
) -> Dict[str, Any]:
    """
    Convert a frame sequence into a scene directory.

    Layout: ``thermal/%06d.png``, ``events.csv`` and ``rig.json`` carrying the
    shared-sensor calibration and the scene's frame clock.

    Returns:
        Summary with frame and event counts
    """
    cfg = config or SimConfig()
    scene_dir = Path(scene_dir)
    thermal = [rgb_to_pseudo_thermal(f, cfg.quant_levels, cfg.blur_sigma) for f in frames]
    ts = frame_times(len(frames), cfg.window_us)
    stream = synthesize_events([event_intensity(f) for f in frames], ts, cfg)

    for k, frame in enumerate(thermal):
        write_gray(scene_dir / "thermal" / frame_name(k), frame.pixels)
    write_events(scene_dir / "events.csv", stream)
    height, width = thermal[0].shape
    save_rig(scene_dir / "rig.json", RigCalibration.shared_sensor((width, height)),
             FrameClock(cfg.window_us, 0))

    PipelineLogger(logger).scene_generated(str(scene_dir), len(thermal), len(stream))
    return {"scene": str(scene_dir), "frames": len(thermal), "events": len(stream)}
