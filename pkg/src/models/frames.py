"""Data models for event streams, rasters and frame groups."""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Iterable

import numpy as np

from .geometry import RigCalibration
from ..utils.exceptions import InvalidRasterError, EventStreamError
from ..utils.validators import RasterValidator


@dataclass(frozen=True)
class EventRecord:
    """A single brightness-change record."""
    t: int  # microseconds
    x: int
    y: int
    polarity: int  # -1 | +1

    def __post_init__(self):
        if self.polarity not in (-1, 1):
            raise EventStreamError(f"polarity must be -1 or +1, got {self.polarity}")


@dataclass(eq=False)
class EventStream:
    """Columnar event records ordered by timestamp."""
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=np.int64).ravel()
        self.x = np.asarray(self.x, dtype=np.int64).ravel()
        self.y = np.asarray(self.y, dtype=np.int64).ravel()
        self.p = np.asarray(self.p, dtype=np.int8).ravel()
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise EventStreamError("event columns differ in length")

    @classmethod
    def empty(cls) -> "EventStream":
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0))

    @classmethod
    def from_records(cls, records: Iterable[EventRecord]) -> "EventStream":
        records = list(records)
        if not records:
            return cls.empty()
        return cls(
            [r.t for r in records], [r.x for r in records],
            [r.y for r in records], [r.polarity for r in records],
        )

    @classmethod
    def concatenate(cls, streams: Sequence["EventStream"]) -> "EventStream":
        if not streams:
            return cls.empty()
        return cls(
            np.concatenate([s.t for s in streams]), np.concatenate([s.x for s in streams]),
            np.concatenate([s.y for s in streams]), np.concatenate([s.p for s in streams]),
        )

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, index) -> "EventStream":
        return EventStream(self.t[index], self.x[index], self.y[index], self.p[index])

    def records(self) -> List[EventRecord]:
        return [EventRecord(int(t), int(x), int(y), int(p))
                for t, x, y, p in zip(self.t, self.x, self.y, self.p)]

    def first_unsorted(self) -> Optional[int]:
        """Index of the first record whose timestamp decreases, or None."""
        bad = np.flatnonzero(np.diff(self.t) < 0)
        return int(bad[0]) + 1 if len(bad) else None


@dataclass(frozen=True)
class FrameClock:
    """Thermal-clock ticks that delimit event windows."""
    period_us: int = 20000
    t0: int = 0

    def __post_init__(self):
        if self.period_us <= 0:
            raise EventStreamError(f"period_us must be positive, got {self.period_us}")

    def window(self, k: int) -> Tuple[int, int]:
        """Half-open window [start, end) of tick ``k``."""
        start = self.t0 + k * self.period_us
        return start, start + self.period_us


@dataclass(eq=False)
class EventFrame:
    """Event activity raster for one thermal tick."""
    pixels: np.ndarray
    t_start: int = 0
    t_end: int = 20000

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        RasterValidator.validate_unit_raster("event frame", self.pixels)
        if self.t_end <= self.t_start:
            raise InvalidRasterError("event frame", f"t_end {self.t_end} <= t_start {self.t_start}")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    @property
    def resolution(self) -> Tuple[int, int]:
        """(width, height)."""
        return self.pixels.shape[1], self.pixels.shape[0]

    def active(self) -> np.ndarray:
        return self.pixels > 0

    def with_pixels(self, pixels: np.ndarray) -> "EventFrame":
        return EventFrame(pixels, self.t_start, self.t_end)


@dataclass(eq=False)
class ThermalFrame:
    """Long-wave infrared intensity raster."""
    pixels: np.ndarray
    t_us: int = 0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        RasterValidator.validate_unit_raster("thermal frame", self.pixels)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.pixels.shape[1], self.pixels.shape[0]


@dataclass(eq=False)
class FrameGroup:
    """T temporally aligned (thermal, event) pairs.

    ``events`` live on the event sensor's native grid; ``registered_events``
    on the thermal grid. For shared-sensor rigs both lists are the same.
    """
    thermal: List[ThermalFrame]
    events: List[EventFrame]
    rig: RigCalibration = field(default_factory=RigCalibration)
    registered_events: Optional[List[EventFrame]] = None
    scene: str = ""
    start: int = 0

    def __post_init__(self):
        if len(self.thermal) != len(self.events):
            raise EventStreamError(
                f"group has {len(self.thermal)} thermal and {len(self.events)} event frames"
            )
        if self.registered_events is None:
            self.registered_events = list(self.events)

    def __len__(self) -> int:
        return len(self.thermal)

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.thermal[0].resolution

    def thermal_stack(self) -> np.ndarray:
        return np.stack([f.pixels for f in self.thermal])

    def event_stack(self) -> np.ndarray:
        """Registered event frames stacked as (T, H, W)."""
        return np.stack([f.pixels for f in self.registered_events])
