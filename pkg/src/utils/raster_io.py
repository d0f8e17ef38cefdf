"""PNG read/write helpers for 8-bit grayscale rasters."""
from pathlib import Path
from typing import Union

import cv2
import numpy as np

from .exceptions import FileOperationError


def read_gray(path: Union[str, Path]) -> np.ndarray:
    """Read an 8-bit grayscale PNG as float32 in [0, 1]."""
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise FileOperationError("read", str(path), "not a readable image")
    return img.astype(np.float32) / 255.0


def to_uint8(pixels: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] raster to 8 bits (round half to even)."""
    return np.clip(np.rint(np.asarray(pixels, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def write_gray(path: Union[str, Path], pixels: np.ndarray) -> Path:
    """Write a [0, 1] raster as an 8-bit grayscale PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), to_uint8(pixels)):
        raise FileOperationError("write", str(path), "encoder rejected the raster")
    return path


def frame_name(index: int) -> str:
    """Zero-padded frame file name used throughout the scene layout."""
    return f"{index:06d}.png"
