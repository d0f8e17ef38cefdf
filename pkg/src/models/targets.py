"""Data models for the constructed training targets."""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np


@dataclass(eq=False)
class SignageRegion:
    """A set of pixel indices belonging to one signage instance."""
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64).ravel()
        self.cols = np.asarray(self.cols, dtype=np.int64).ravel()

    @classmethod
    def from_box(cls, x: int, y: int, width: int, height: int) -> "SignageRegion":
        rr, cc = np.mgrid[y:y + height, x:x + width]
        return cls(rr, cc)

    @property
    def area(self) -> int:
        return int(len(np.unique(self.rows * (self.cols.max(initial=0) + 1) + self.cols)))

    @property
    def bbox(self) -> Tuple[int, int, int, int]:
        """(x, y, width, height) of the region."""
        if len(self.rows) == 0:
            return 0, 0, 0, 0
        x0, y0 = int(self.cols.min()), int(self.rows.min())
        return x0, y0, int(self.cols.max()) - x0 + 1, int(self.rows.max()) - y0 + 1


@dataclass(eq=False)
class SignageMask:
    """Binary raster selecting the union of signage regions."""
    pixels: np.ndarray
    regions: List[SignageRegion] = field(default_factory=list)

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels).astype(bool)

    @property
    def area(self) -> int:
        return int(self.pixels.sum())

    def as_float(self) -> np.ndarray:
        return self.pixels.astype(np.float32)


@dataclass(eq=False)
class TccTarget:
    """Binary warp-and-vote target for one frame of a group."""
    pixels: np.ndarray
    t_index: int
    T: int
    vote_threshold: float

    def __post_init__(self):
        self.pixels = (np.asarray(self.pixels) > 0).astype(np.float32)


@dataclass(eq=False)
class GroupTargets:
    """All pseudo ground truths of one frame group (thermal grid)."""
    masks: List[SignageMask]
    sis_gt: List[np.ndarray]
    tcc_gt: TccTarget

    def mask_stack(self) -> np.ndarray:
        return np.stack([m.as_float() for m in self.masks])

    def sis_stack(self) -> np.ndarray:
        return np.stack(self.sis_gt).astype(np.float32)
