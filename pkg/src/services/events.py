"""Event stream ingestion, slicing, rasterisation, warping and denoising."""
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np
from scipy import ndimage

from ..models.frames import EventFrame, EventStream, FrameClock
from ..models.geometry import Homography, RigCalibration
from ..utils.exceptions import (
    UnsortedStreamError,
    OutOfBoundsEventError,
    EventFileFormatError,
    FileOperationError,
)
from ..utils.logger import get_logger
from ..utils.validators import RasterValidator

logger = get_logger("events")

DEFAULT_GAIN = 1.0 / 3.0
CSV_HEADER = "t_us,x,y,p"
BINARY_RECORD = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1")])


# ============================================================================
# Slicing
# ============================================================================

def partition_stream(stream: EventStream, clock: FrameClock, n_frames: int) -> List[EventStream]:
    """
    Split a sorted stream into ``n_frames`` half-open clock windows.

    Raises:
        UnsortedStreamError: If timestamps decrease anywhere in the stream
    """
    bad = stream.first_unsorted()
    if bad is not None:
        raise UnsortedStreamError(bad)
    edges = clock.t0 + clock.period_us * np.arange(n_frames + 1, dtype=np.int64)
    bounds = np.searchsorted(stream.t, edges, side="left")
    return [stream[bounds[k]:bounds[k + 1]] for k in range(n_frames)]


def merge_slices(slices: Sequence[EventStream]) -> EventStream:
    """Inverse of :func:`partition_stream` over the covered span."""
    return EventStream.concatenate(list(slices))


# ============================================================================
# Rasterisation
# ============================================================================

def render_frame(
    slice_: EventStream,
    resolution: Tuple[int, int],
    gain: float = DEFAULT_GAIN,
    t_start: int = 0,
    t_end: int = 20000,
) -> EventFrame:
    """
    Count events per pixel (polarity ignored) and scale by ``gain``.

    Args:
        slice_: Events of one window
        resolution: (width, height) of the sensor

    Raises:
        OutOfBoundsEventError: If a record lies outside the resolution
    """
    width, height = resolution
    if len(slice_):
        outside = (slice_.x < 0) | (slice_.x >= width) | (slice_.y < 0) | (slice_.y >= height)
        if outside.any():
            i = int(np.flatnonzero(outside)[0])
            raise OutOfBoundsEventError(int(slice_.x[i]), int(slice_.y[i]), resolution)
    counts = np.bincount(slice_.y * width + slice_.x, minlength=width * height)
    pixels = np.clip(counts.reshape(height, width) * float(gain), 0.0, 1.0)
    return EventFrame(pixels.astype(np.float32), t_start, t_end)


def stream_to_frames(
    stream: EventStream,
    clock: FrameClock,
    n_frames: int,
    resolution: Tuple[int, int],
    gain: float = DEFAULT_GAIN,
) -> List[EventFrame]:
    """Partition and rasterise in one go; frame k covers clock window k."""
    frames = []
    for k, part in enumerate(partition_stream(stream, clock, n_frames)):
        t_start, t_end = clock.window(k)
        frames.append(render_frame(part, resolution, gain, t_start, t_end))
    return frames


# ============================================================================
# Denoising
# ============================================================================

def _support_counts(active: np.ndarray, support_radius: Tuple[int, int, int]) -> np.ndarray:
    dt, dx, dy = support_radius
    box = np.ones((2 * dt + 1, 2 * dy + 1, 2 * dx + 1), dtype=np.int32)
    counts = ndimage.convolve(active.astype(np.int32), box, mode="constant", cval=0)
    return counts - active.astype(np.int32)


def denoise_spatiotemporal(
    frames: Sequence[EventFrame],
    support_radius: Tuple[int, int, int] = (1, 1, 1),
    min_support: int = 2,
    until_stable: bool = False,
) -> List[EventFrame]:
    """
    Drop active pixels lacking local spatiotemporal support.

    A nonzero pixel survives when at least ``min_support`` other nonzero
    pixels lie in its (2dt+1) x (2dy+1) x (2dx+1) neighbourhood. Zero pixels
    are untouched. With ``until_stable`` the filter is repeated until nothing
    changes, which makes the result idempotent.

    Raises:
        ShapeMismatchError: If the frames differ in resolution
    """
    if not frames:
        return []
    if min_support < 1:
        raise ValueError(f"min_support must be >= 1, got {min_support}")
    RasterValidator.validate_same_shape("denoise stack", *[f.pixels for f in frames])

    stack = np.stack([f.pixels for f in frames])
    active = stack > 0
    while True:
        keep = active & (_support_counts(active, support_radius) >= min_support)
        if not until_stable or np.array_equal(keep, active):
            break
        active = keep

    cleaned = np.where(keep, stack, 0.0).astype(np.float32)
    return [f.with_pixels(cleaned[i]) for i, f in enumerate(frames)]


# ============================================================================
# Warping
# ============================================================================

def warp_raster(
    pixels: np.ndarray,
    h: Homography,
    out_size: Optional[Tuple[int, int]] = None,
) -> np.ndarray:
    """Inverse-mapping bilinear warp; samples from outside the source are 0."""
    src = np.asarray(pixels, dtype=np.float32)
    size = out_size or (src.shape[1], src.shape[0])
    if h.allclose(Homography.identity(), atol=0.0) and tuple(size) == (src.shape[1], src.shape[0]):
        return src.copy()
    warped = cv2.warpPerspective(
        src, h.m, tuple(int(s) for s in size),
        flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT, borderValue=0.0,
    )
    return np.clip(warped, 0.0, 1.0)


def warp_event_frame(
    frame: EventFrame,
    h: Homography,
    out_size: Optional[Tuple[int, int]] = None,
) -> EventFrame:
    """
    Move an event frame through ``h`` (source pixel -> destination pixel).

    Args:
        out_size: Optional destination (width, height); defaults to the source size
    """
    return frame.with_pixels(warp_raster(frame.pixels, h, out_size))


def register_to_thermal(frames: Sequence[EventFrame], rig: RigCalibration) -> List[EventFrame]:
    """Bring native event frames onto the thermal pixel grid of the rig."""
    if rig.is_shared_sensor:
        return list(frames)
    h = rig.h_ev_to_ir
    return [warp_event_frame(f, h, rig.ir_resolution) for f in frames]


# ============================================================================
# File IO
# ============================================================================

def write_events(path: Union[str, Path], stream: EventStream) -> Path:
    """Write a stream as CSV, or as packed binary records for ``.bin`` paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        if path.suffix == ".bin":
            records = np.empty(len(stream), dtype=BINARY_RECORD)
            records["t"], records["x"], records["y"], records["p"] = stream.t, stream.x, stream.y, stream.p
            records.tofile(path)
        else:
            table = np.column_stack([stream.t, stream.x, stream.y, stream.p.astype(np.int64)])
            np.savetxt(path, table.reshape(-1, 4), fmt="%d", delimiter=",", header=CSV_HEADER, comments="")
    except OSError as e:
        raise FileOperationError("write", str(path), str(e))
    logger.debug(f"Wrote {len(stream)} events to {path}")
    return path


def read_events(path: Union[str, Path]) -> EventStream:
    """
    Read a CSV (``t_us,x,y,p``) or packed binary event file.

    Raises:
        FileOperationError: If the file does not exist
        EventFileFormatError: If the content is malformed
    """
    path = Path(path)
    if not path.is_file():
        raise FileOperationError("read", str(path), "event file not found")

    if path.suffix == ".bin":
        raw = path.read_bytes()
        if len(raw) % BINARY_RECORD.itemsize:
            raise EventFileFormatError(str(path), f"size not a multiple of {BINARY_RECORD.itemsize}")
        records = np.frombuffer(raw, dtype=BINARY_RECORD)
        stream = EventStream(records["t"].astype(np.int64), records["x"], records["y"], records["p"])
    else:
        with path.open() as fh:
            header = fh.readline().strip()
            if header.replace(" ", "") != CSV_HEADER:
                raise EventFileFormatError(str(path), f"expected header '{CSV_HEADER}', got '{header}'")
            try:
                table = np.loadtxt(fh, delimiter=",", dtype=np.int64, ndmin=2)
            except ValueError as e:
                raise EventFileFormatError(str(path), str(e))
        if table.size == 0:
            return EventStream.empty()
        if table.shape[1] != 4:
            raise EventFileFormatError(str(path), f"expected 4 columns, got {table.shape[1]}")
        stream = EventStream(table[:, 0], table[:, 1], table[:, 2], table[:, 3])

    if len(stream) and not np.isin(stream.p, (-1, 1)).all():
        raise EventFileFormatError(str(path), "polarity must be -1 or 1")
    return stream
