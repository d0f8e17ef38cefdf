"""Custom exception hierarchy for the thermal-event signage sketching pipeline."""
from typing import Optional, Tuple


class UtaSignError(Exception):
    """Base exception for all pipeline errors."""
    def __init__(self, message: str, recoverable: bool = True, user_message: Optional[str] = None):
        """
        Initialize exception.

        Args:
            message: Technical error message for logging
            recoverable: Whether the run can continue after this error
            user_message: Short message to display on the CLI
        """
        super().__init__(message)
        self.recoverable = recoverable
        self.user_message = user_message or message


# Geometry Errors
class GeometryError(UtaSignError):
    """Base class for homography and registration errors."""
    pass


class SingularHomographyError(GeometryError):
    """Homography fails the invertibility bound."""
    def __init__(self, determinant: float):
        super().__init__(
            f"Singular homography (|det| = {abs(determinant):.3e} <= 1e-9)",
            recoverable=False,
            user_message="Homography is not invertible."
        )
        self.determinant = determinant


class InsufficientFeaturesError(GeometryError):
    """Not enough corners or matches to fit a homography."""
    def __init__(self, found: int, required: int, stage: str = "corners"):
        super().__init__(
            f"Insufficient {stage}: found {found}, need {required}",
            recoverable=True,
            user_message=f"Not enough image texture to estimate motion ({stage}: {found}/{required})."
        )
        self.found = found
        self.required = required
        self.stage = stage


class DegenerateGeometryError(GeometryError):
    """Inlier set is rank-deficient or the fit is too inaccurate."""
    def __init__(self, reason: str):
        super().__init__(
            f"Degenerate geometry: {reason}",
            recoverable=True,
            user_message="Motion estimate rejected as degenerate."
        )
        self.reason = reason


# Event Stream Errors
class EventStreamError(UtaSignError):
    """Base class for event stream errors."""
    pass


class UnsortedStreamError(EventStreamError):
    """Event timestamps decrease somewhere in the stream."""
    def __init__(self, index: int):
        super().__init__(
            f"Event stream not sorted by t (first decrease at record {index})",
            recoverable=False,
            user_message="Event stream must be sorted by timestamp."
        )
        self.index = index


class OutOfBoundsEventError(EventStreamError):
    """Event record lies outside the sensor resolution."""
    def __init__(self, x: int, y: int, resolution: Tuple[int, int]):
        super().__init__(
            f"Event at ({x}, {y}) outside resolution {resolution[0]}x{resolution[1]}",
            recoverable=False,
            user_message="Event coordinates exceed the sensor resolution."
        )
        self.x = x
        self.y = y
        self.resolution = resolution


class EventFileFormatError(EventStreamError):
    """Event file could not be parsed."""
    def __init__(self, filepath: str, reason: str):
        super().__init__(
            f"Bad event file {filepath}: {reason}",
            recoverable=False,
            user_message=f"Event file error: {reason}"
        )
        self.filepath = filepath
        self.reason = reason


# Raster Errors
class RasterError(UtaSignError):
    """Base class for raster errors."""
    pass


class ShapeMismatchError(RasterError):
    """Two rasters (or tensors) that must agree in shape do not."""
    def __init__(self, what: str, expected: tuple, got: tuple):
        super().__init__(
            f"Shape mismatch for {what}: expected {tuple(expected)}, got {tuple(got)}",
            recoverable=False,
            user_message=f"Shape mismatch for {what}."
        )
        self.expected = tuple(expected)
        self.got = tuple(got)


class OutOfBoundsRegionError(RasterError):
    """Signage region has pixels outside the raster."""
    def __init__(self, resolution: Tuple[int, int]):
        super().__init__(
            f"Region exceeds raster bounds {resolution[0]}x{resolution[1]}",
            recoverable=False,
            user_message="Signage region lies outside the frame."
        )
        self.resolution = resolution


class InvalidRasterError(RasterError):
    """Raster values are not finite or not in the expected range."""
    def __init__(self, name: str, reason: str):
        super().__init__(
            f"Invalid raster {name}: {reason}",
            recoverable=False,
            user_message=f"Invalid {name}: {reason}"
        )
        self.name = name
        self.reason = reason


# Simulation Errors
class SimulationError(UtaSignError):
    """Base class for synthetic data generation errors."""
    pass


class InsufficientFramesError(SimulationError):
    """Not enough frames for a group."""
    def __init__(self, found: int, required: int):
        super().__init__(
            f"Need at least {required} frames, got {found}",
            recoverable=False,
            user_message=f"Not enough frames ({found}/{required})."
        )
        self.found = found
        self.required = required


class NonMonotonicTimestampsError(SimulationError):
    """Frame timestamps are not strictly increasing."""
    def __init__(self, index: int):
        super().__init__(
            f"Frame timestamps not strictly increasing at index {index}",
            recoverable=False,
            user_message="Frame timestamps must increase."
        )
        self.index = index


# Network Errors
class NetworkError(UtaSignError):
    """Base class for model construction and forward errors."""
    pass


class InvalidInputShapeError(NetworkError):
    """Input shape violates a network precondition."""
    def __init__(self, network: str, reason: str):
        super().__init__(
            f"{network}: {reason}",
            recoverable=False,
            user_message=f"Invalid input for {network}: {reason}"
        )
        self.network = network
        self.reason = reason


class WindowSizeError(NetworkError):
    """Attention window does not fit the padded feature volume."""
    def __init__(self, window: tuple, volume: tuple):
        super().__init__(
            f"Window {tuple(window)} larger than padded volume {tuple(volume)}",
            recoverable=False,
            user_message="Attention window does not fit the feature volume."
        )
        self.window = tuple(window)
        self.volume = tuple(volume)


# Dataset Errors
class DatasetError(UtaSignError):
    """Base class for dataset errors."""
    pass


class GroupValidationError(DatasetError):
    """A frame group failed validation."""
    def __init__(self, scene: str, start: int, reason: str):
        super().__init__(
            f"Group {scene}@{start} rejected: {reason}",
            recoverable=True,
            user_message=f"Skipping group {scene}@{start}: {reason}"
        )
        self.scene = scene
        self.start = start
        self.reason = reason


# Training Errors
class TrainingDivergenceError(UtaSignError):
    """Total loss became NaN or Inf."""
    def __init__(self, step: int, value: float):
        super().__init__(
            f"Training diverged at step {step} (total loss = {value})",
            recoverable=False,
            user_message=f"Training diverged at step {step}."
        )
        self.step = step
        self.value = value


class CheckpointError(UtaSignError):
    """Checkpoint archive is missing, foreign or corrupted."""
    def __init__(self, filepath: str, reason: str):
        super().__init__(
            f"Checkpoint {filepath}: {reason}",
            recoverable=False,
            user_message=f"Cannot use checkpoint: {reason}"
        )
        self.filepath = filepath
        self.reason = reason


class NiqeModelError(UtaSignError):
    """NIQE model could not be fitted, loaded or applied."""
    def __init__(self, reason: str):
        super().__init__(
            f"NIQE model error: {reason}",
            recoverable=False,
            user_message=f"NIQE: {reason}"
        )
        self.reason = reason


# Configuration Errors
class ConfigurationError(UtaSignError):
    """Configuration is invalid."""
    def __init__(self, field: str, reason: str):
        super().__init__(
            f"Configuration error in {field}: {reason}",
            recoverable=False,
            user_message=f"Configuration error: {reason}. Please check your config file."
        )
        self.field = field
        self.reason = reason


# File I/O Errors
class FileOperationError(UtaSignError):
    """File operation failed."""
    def __init__(self, operation: str, filepath: str, reason: str):
        super().__init__(
            f"Failed to {operation} {filepath}: {reason}",
            recoverable=False,
            user_message=f"File error: Could not {operation} file. {reason}"
        )
        self.operation = operation
        self.filepath = filepath
        self.reason = reason
