"""Input validation utilities for rasters, shapes and paths."""
from pathlib import Path
from typing import Sequence, Tuple, Union

import numpy as np

from .exceptions import (
    InvalidRasterError,
    ShapeMismatchError,
    InvalidInputShapeError,
    FileOperationError
)


class RasterValidator:
    """Validate rasters and file paths handed to the pipeline."""

    # Tolerance for values that were clipped in float32
    UNIT_TOLERANCE = 1e-6

    @classmethod
    def validate_unit_raster(cls, name: str, pixels: np.ndarray, ndim: int = 2) -> np.ndarray:
        """
        Check a raster is finite and inside [0, 1].

        Args:
            name: Raster name used in the error message
            pixels: Raster to check
            ndim: Expected number of dimensions

        Returns:
            The raster as a numpy array

        Raises:
            InvalidRasterError: If the raster is malformed
        """
        arr = np.asarray(pixels)
        if arr.ndim != ndim:
            raise InvalidRasterError(name, f"expected {ndim}D array, got {arr.ndim}D")
        if arr.size == 0:
            raise InvalidRasterError(name, "empty raster")
        if not np.all(np.isfinite(arr)):
            raise InvalidRasterError(name, "non-finite values")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < -cls.UNIT_TOLERANCE or hi > 1.0 + cls.UNIT_TOLERANCE:
            raise InvalidRasterError(name, f"values outside [0, 1] (min={lo:.4g}, max={hi:.4g})")
        return arr

    @classmethod
    def validate_same_shape(cls, what: str, *arrays) -> Tuple[int, ...]:
        """
        Check that every array has the shape of the first.

        Returns:
            The common shape

        Raises:
            ShapeMismatchError: On the first disagreeing array
        """
        shapes = [tuple(np.shape(a)) for a in arrays]
        for shape in shapes[1:]:
            if shape != shapes[0]:
                raise ShapeMismatchError(what, shapes[0], shape)
        return shapes[0] if shapes else ()

    @classmethod
    def validate_divisible(cls, network: str, size: Sequence[int], factor: int) -> None:
        """
        Check spatial dims are divisible by ``factor``.

        Raises:
            InvalidInputShapeError: If any dim is not divisible
        """
        for dim in size:
            if dim % factor:
                raise InvalidInputShapeError(
                    network, f"spatial size {tuple(size)} not divisible by {factor}"
                )

    @classmethod
    def validate_file_path(cls, filepath: Union[str, Path], must_exist: bool = True) -> Path:
        """
        Validate a file path.

        Args:
            filepath: Path to validate
            must_exist: Whether file must exist

        Returns:
            Validated Path object

        Raises:
            FileOperationError: If path is invalid
        """
        try:
            path = Path(filepath).expanduser().resolve()
        except (OSError, RuntimeError) as e:
            raise FileOperationError("resolve", str(filepath), str(e))

        if must_exist and not path.exists():
            raise FileOperationError("open", str(filepath), "file not found")

        if must_exist and not path.is_file():
            raise FileOperationError("open", str(filepath), "not a file")

        return path
