"""Projective geometry value types for the dual-camera rig."""
from dataclasses import dataclass, field
from typing import Tuple, Dict, Any, Sequence

import numpy as np

from ..utils.exceptions import SingularHomographyError, DegenerateGeometryError

DET_BOUND = 1e-9


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective map on pixel coordinates, normalised so m[2][2] = 1."""
    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(m)):
            raise DegenerateGeometryError("non-finite homography entries")
        if abs(m[2, 2]) < 1e-12:
            raise DegenerateGeometryError("m[2][2] is zero, cannot normalise")
        m = m / m[2, 2]
        det = float(np.linalg.det(m))
        if abs(det) <= DET_BOUND:
            raise SingularHomographyError(det)
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    @classmethod
    def scaling(cls, sx: float, sy: float = None) -> "Homography":
        sy = sx if sy is None else sy
        return cls(np.diag([sx, sy, 1.0]))

    @classmethod
    def rotation(cls, degrees: float, center: Tuple[float, float] = (0.0, 0.0)) -> "Homography":
        """Rotation by ``degrees`` (counter-clockwise in image axes) about ``center``."""
        a = np.deg2rad(degrees)
        c, s = np.cos(a), np.sin(a)
        cx, cy = center
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(cls.translation(cx, cy).m @ rot @ cls.translation(-cx, -cy).m)

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Homography":
        if len(values) != 9:
            raise DegenerateGeometryError(f"expected 9 values, got {len(values)}")
        return cls(np.asarray(values, dtype=np.float64).reshape(3, 3))

    def to_list(self) -> list:
        return [float(v) for v in self.m.ravel()]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.m))

    def __matmul__(self, other: "Homography") -> "Homography":
        return Homography(self.m @ other.m)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map (N, 2) pixel coordinates through the homography."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        hom = np.hstack([pts, np.ones((len(pts), 1))]) @ self.m.T
        return hom[:, :2] / hom[:, 2:3]

    def corner_transfer_error(self, other: "Homography", size: Tuple[int, int]) -> float:
        """Max distance between the images of the frame corners under both maps."""
        w, h = size
        corners = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)
        return float(np.max(np.linalg.norm(self.apply(corners) - other.apply(corners), axis=1)))

    def allclose(self, other: "Homography", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.m, other.m, rtol=0.0, atol=atol))


@dataclass(frozen=True)
class RigCalibration:
    """Fixed thermal-to-event registration of the side-by-side rig."""
    h_ir_to_ev: Homography = field(default_factory=Homography.identity)
    ir_resolution: Tuple[int, int] = (640, 512)
    ev_resolution: Tuple[int, int] = (346, 260)

    def __post_init__(self):
        for name in ("ir_resolution", "ev_resolution"):
            w, h = getattr(self, name)
            if w <= 0 or h <= 0:
                raise DegenerateGeometryError(f"{name} must be positive, got {(w, h)}")
            object.__setattr__(self, name, (int(w), int(h)))

    @property
    def is_shared_sensor(self) -> bool:
        """Both modalities already share one pixel grid."""
        return self.ir_resolution == self.ev_resolution and self.h_ir_to_ev.allclose(Homography.identity(), atol=0.0)

    @property
    def h_ev_to_ir(self) -> Homography:
        return self.h_ir_to_ev.inverse()

    def to_dict(self) -> Dict[str, Any]:
        """Convert to the calibration-file key-value layout."""
        return {
            "h_ir_to_ev": self.h_ir_to_ev.to_list(),
            "ir_resolution": list(self.ir_resolution),
            "ev_resolution": list(self.ev_resolution),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RigCalibration":
        return cls(
            h_ir_to_ev=Homography.from_list(data["h_ir_to_ev"]),
            ir_resolution=tuple(data["ir_resolution"]),
            ev_resolution=tuple(data["ev_resolution"]),
        )

    @classmethod
    def shared_sensor(cls, resolution: Tuple[int, int]) -> "RigCalibration":
        """Rig whose two modalities share one pixel grid (simulated data)."""
        return cls(Homography.identity(), tuple(resolution), tuple(resolution))
