"""Homography algebra, thermal ego-motion and modality registration for the rig."""
import json
import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import cv2
import numpy as np
from tenacity import Retrying, stop_after_attempt, retry_if_exception_type

from ..models.frames import FrameClock, ThermalFrame
from ..models.geometry import Homography, RigCalibration
from ..utils.config import CalibConfig
from ..utils.exceptions import (
    InsufficientFeaturesError,
    DegenerateGeometryError,
    GeometryError,
    FileOperationError,
)
from ..utils.logger import get_logger, PipelineLogger
from ..utils.raster_io import to_uint8
from ..utils.validators import RasterValidator


def compose_relative_motion(h_ir_rel: Homography, rig: RigCalibration) -> Homography:
    """
    Transfer an inter-frame thermal motion onto the event camera.

    Event pixels are taken to the thermal grid, moved, and brought back:
    ``h_ir_to_ev @ h_ir_rel @ h_ir_to_ev^-1``.

    Raises:
        SingularHomographyError: If an intermediate product is not invertible
    """
    h = rig.h_ir_to_ev
    return Homography(h.m @ h_ir_rel.m @ np.linalg.inv(h.m))


def _rank_deficient(points: np.ndarray) -> bool:
    """True when the points are (nearly) collinear or coincident."""
    if len(points) < 4:
        return True
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    return sv[-1] < 1e-3 * max(sv[0], 1e-12)


class MotionEstimator:
    """Fit prev->cur thermal homographies from tracked corners."""

    def __init__(self, config: Optional[CalibConfig] = None, logger: Optional[logging.Logger] = None):
        self.config = config or CalibConfig()
        self.logger = logger or get_logger("calib")
        self.events = PipelineLogger(self.logger)

    def estimate(self, frame_prev: ThermalFrame, frame_cur: ThermalFrame) -> Homography:
        """
        Estimate the homography mapping ``frame_prev`` pixels onto ``frame_cur``.

        Corner detection is retried with relaxed quality levels before giving up.

        Raises:
            ShapeMismatchError: If the frames differ in resolution
            InsufficientFeaturesError: If no quality level yields enough corners
            DegenerateGeometryError: If the fit is rank-deficient or too inaccurate
        """
        RasterValidator.validate_same_shape("thermal motion pair", frame_prev.pixels, frame_cur.pixels)
        prev = to_uint8(frame_prev.pixels)
        cur = to_uint8(frame_cur.pixels)

        levels = self.config.quality_levels
        retrying = Retrying(
            stop=stop_after_attempt(len(levels)),
            retry=retry_if_exception_type(InsufficientFeaturesError),
            reraise=True,
        )
        for attempt in retrying:
            with attempt:
                quality = levels[attempt.retry_state.attempt_number - 1]
                return self._fit(prev, cur, quality)

    def _fit(self, prev: np.ndarray, cur: np.ndarray, quality: float) -> Homography:
        cfg = self.config
        corners = cv2.goodFeaturesToTrack(
            prev, maxCorners=cfg.max_corners, qualityLevel=quality, minDistance=cfg.min_distance
        )
        found = 0 if corners is None else len(corners)
        if found < cfg.min_corners:
            self.logger.debug(f"Only {found} corners at quality {quality}")
            raise InsufficientFeaturesError(found, cfg.min_corners, "corners")

        tracked, status, _ = cv2.calcOpticalFlowPyrLK(
            prev, cur, corners, None, winSize=(21, 21), maxLevel=3,
            criteria=(cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT, 50, 0.01),
        )
        ok = status.ravel() == 1
        src = corners.reshape(-1, 2)[ok]
        dst = tracked.reshape(-1, 2)[ok]
        if len(src) < cfg.min_inliers:
            raise InsufficientFeaturesError(len(src), cfg.min_inliers, "tracks")

        return self._robust_homography(src, dst)

    def _robust_homography(self, src: np.ndarray, dst: np.ndarray) -> Homography:
        cfg = self.config
        m, mask = cv2.findHomography(src, dst, cv2.RANSAC, cfg.ransac_threshold)
        if m is None or mask is None:
            raise DegenerateGeometryError("consensus fit failed")
        inliers = mask.ravel().astype(bool)
        n_in = int(inliers.sum())
        if n_in < cfg.min_inliers:
            raise DegenerateGeometryError(f"{n_in} inliers < {cfg.min_inliers}")
        if _rank_deficient(src[inliers]):
            raise DegenerateGeometryError("inlier set is rank-deficient")

        h = Homography(m)
        residual = h.apply(src[inliers]) - dst[inliers]
        rms = float(np.sqrt(np.mean(np.sum(residual ** 2, axis=1))))
        if rms > cfg.max_rms:
            raise DegenerateGeometryError(f"inlier rms {rms:.3f}px > {cfg.max_rms}px")

        self.events.motion_estimated(n_in, rms)
        return h


def estimate_thermal_motion(
    frame_prev: ThermalFrame,
    frame_cur: ThermalFrame,
    config: Optional[CalibConfig] = None,
) -> Homography:
    """Module-level shortcut for ``MotionEstimator(config).estimate``."""
    return MotionEstimator(config).estimate(frame_prev, frame_cur)


def register_modalities(
    ev_gray: np.ndarray,
    ir_frame: ThermalFrame,
    config: Optional[CalibConfig] = None,
) -> Homography:
    """
    Register the event camera's grayscale frame onto the thermal frame.

    Args:
        ev_gray: Grayscale raster from the event camera, values in [0, 1]
        ir_frame: Thermal frame of the same instant

    Returns:
        Homography mapping event pixels to thermal pixel coordinates

    Raises:
        InsufficientFeaturesError: If either raster is constant or too few matches survive
    """
    cfg = config or CalibConfig()
    logger = get_logger("calib")
    ev = np.asarray(ev_gray, dtype=np.float32)
    ir = ir_frame.pixels
    for name, raster in (("event", ev), ("thermal", ir)):
        if float(np.ptp(raster)) <= 1e-9:
            logger.warning(f"Constant {name} raster handed to registration")
            raise InsufficientFeaturesError(0, cfg.min_inliers, f"{name} texture")

    sift = cv2.SIFT_create()
    kp_ev, des_ev = sift.detectAndCompute(to_uint8(ev), None)
    kp_ir, des_ir = sift.detectAndCompute(to_uint8(ir), None)
    if des_ev is None or des_ir is None or len(kp_ev) < 2 or len(kp_ir) < 2:
        raise InsufficientFeaturesError(0 if des_ev is None else len(kp_ev), cfg.min_inliers, "keypoints")

    # Lowe's ratio test
    matcher = cv2.BFMatcher(cv2.NORM_L2)
    good = [
        pair[0] for pair in matcher.knnMatch(des_ev, des_ir, k=2)
        if len(pair) == 2 and pair[0].distance < cfg.ratio_test * pair[1].distance
    ]
    if len(good) < cfg.min_inliers:
        raise InsufficientFeaturesError(len(good), cfg.min_inliers, "matches")

    src = np.float32([kp_ev[g.queryIdx].pt for g in good])
    dst = np.float32([kp_ir[g.trainIdx].pt for g in good])
    m, mask = cv2.findHomography(src, dst, cv2.RANSAC, cfg.ransac_threshold)
    if m is None or int(mask.sum()) < cfg.min_inliers:
        raise InsufficientFeaturesError(0 if mask is None else int(mask.sum()), cfg.min_inliers, "inliers")

    logger.info(f"Registered modalities with {int(mask.sum())}/{len(good)} inlier matches")
    return Homography(m)


def calibrate_rig(
    ev_gray: np.ndarray,
    ir_frame: ThermalFrame,
    config: Optional[CalibConfig] = None,
) -> RigCalibration:
    """Register the two modalities and store the result as a rig calibration."""
    h_ev_to_ir = register_modalities(ev_gray, ir_frame, config)
    ev_h, ev_w = np.shape(ev_gray)
    return RigCalibration(
        h_ir_to_ev=h_ev_to_ir.inverse(),
        ir_resolution=ir_frame.resolution,
        ev_resolution=(ev_w, ev_h),
    )


def save_rig(
    path: Union[str, Path],
    rig: RigCalibration,
    clock: Optional[FrameClock] = None,
) -> Path:
    """Write the calibration file; the optional clock is stored alongside."""
    path = Path(path)
    doc = rig.to_dict()
    if clock is not None:
        doc["frame_period_us"] = clock.period_us
        doc["t0_us"] = clock.t0
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2))
    except OSError as e:
        raise FileOperationError("write", str(path), str(e))
    return path


def load_rig(path: Union[str, Path]) -> Tuple[RigCalibration, Optional[FrameClock]]:
    """
    Read a calibration file.

    Returns:
        The rig and, when the file carries one, the scene frame clock

    Raises:
        FileOperationError: If the file is missing or malformed
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
        rig = RigCalibration.from_dict(doc)
    except FileNotFoundError:
        raise FileOperationError("read", str(path), "calibration file not found")
    except (OSError, ValueError, KeyError, TypeError, GeometryError) as e:
        raise FileOperationError("parse", str(path), str(e))

    clock = None
    if "frame_period_us" in doc:
        clock = FrameClock(int(doc["frame_period_us"]), int(doc.get("t0_us", 0)))
    return rig, clock
