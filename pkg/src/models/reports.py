"""Data models for loss reports, quality models and evaluation rows."""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..utils.exceptions import NiqeModelError

LOSS_COLUMNS = ("l_sis", "l_tcc", "l_per", "l_grad")


@dataclass
class FrameLoss:
    """Loss components of one frame of a group."""
    t: int
    l_sis: float = 0.0
    l_tcc: float = 0.0
    l_per: float = 0.0
    l_grad: float = 0.0

    @property
    def total(self) -> float:
        return self.l_sis + self.l_tcc + self.l_per + self.l_grad


@dataclass
class LossReport:
    """Per-term and per-frame breakdown of the training objective."""
    l_sis: float
    l_tcc: float
    l_per: float
    l_grad: float
    total: float
    frames: List[FrameLoss] = field(default_factory=list)
    total_tensor: Optional[Any] = None  # differentiable total, not serialised

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for serialization."""
        return {
            "l_sis": self.l_sis,
            "l_tcc": self.l_tcc,
            "l_per": self.l_per,
            "l_grad": self.l_grad,
            "total": self.total,
            "frames": [
                {"t": f.t, **{k: getattr(f, k) for k in LOSS_COLUMNS}} for f in self.frames
            ],
        }

    def csv_row(self, step: int) -> List[str]:
        return [str(step)] + [repr(float(getattr(self, k))) for k in LOSS_COLUMNS + ("total",)]


@dataclass(eq=False)
class NiqeModel:
    """Multivariate Gaussian of pristine-patch natural scene statistics."""
    mean: np.ndarray
    cov: np.ndarray
    patch_size: int = 96
    sharpness_fraction: float = 0.75

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).ravel()
        self.cov = np.asarray(self.cov, dtype=np.float64)
        d = len(self.mean)
        if self.cov.shape != (d, d):
            raise NiqeModelError(f"covariance shape {self.cov.shape} does not match {d} features")
        if not np.all(np.isfinite(self.mean)) or not np.all(np.isfinite(self.cov)):
            raise NiqeModelError("non-finite model parameters")
        if not np.allclose(self.cov, self.cov.T, atol=1e-10):
            raise NiqeModelError("covariance not symmetric")

    @property
    def dims(self) -> int:
        return len(self.mean)


@dataclass
class EvaluationRow:
    """Quality scores of one frame (or the mean row)."""
    frame: str
    scores: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {"frame": self.frame, **self.scores}
