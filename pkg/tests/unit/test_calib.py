"""
Tests for homography algebra, motion estimation and rig registration.
"""
import json

import cv2
import numpy as np
import pytest

from src.models.frames import FrameClock, ThermalFrame
from src.models.geometry import Homography, RigCalibration
from src.services.calib import (
    MotionEstimator,
    calibrate_rig,
    compose_relative_motion,
    estimate_thermal_motion,
    load_rig,
    register_modalities,
    save_rig,
)
from src.utils.config import CalibConfig
from src.utils.exceptions import (
    DegenerateGeometryError,
    FileOperationError,
    InsufficientFeaturesError,
    ShapeMismatchError,
    SingularHomographyError,
)
from tests.fixtures import make_texture, shift_image


def warp_frame(img: np.ndarray, h: Homography) -> ThermalFrame:
    height, width = img.shape
    out = cv2.warpPerspective(img, h.m, (width, height), flags=cv2.INTER_LINEAR,
                              borderMode=cv2.BORDER_REFLECT)
    return ThermalFrame(np.clip(out, 0.0, 1.0))


def random_homography(rng) -> Homography:
    """Well-conditioned projective map: near-similarity plus mild perspective."""
    m = np.eye(3)
    m[:2, :2] += rng.normal(scale=0.1, size=(2, 2))
    m[:2, 2] = rng.normal(scale=5.0, size=2)
    m[2, :2] = rng.normal(scale=1e-4, size=2)
    return Homography(m)


# ============================================================================
# Homography
# ============================================================================

@pytest.mark.unit
class TestHomography:
    """Test the Homography value type."""

    def test_normalised(self):
        h = Homography(np.diag([2.0, 4.0, 2.0]))
        assert h.m[2, 2] == 1.0
        assert h.allclose(Homography.scaling(1.0, 2.0))

    def test_singular_rejected(self):
        with pytest.raises(SingularHomographyError):
            Homography(np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]))

    def test_non_finite_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            Homography(np.array([[np.nan, 0, 0], [0, 1, 0], [0, 0, 1]]))

    def test_matrix_is_read_only(self):
        h = Homography.identity()
        with pytest.raises(ValueError):
            h.m[0, 0] = 5.0

    def test_inverse_composes_to_identity(self, rng):
        h = random_homography(rng)
        assert (h @ h.inverse()).allclose(Homography.identity(), atol=1e-9)

    def test_apply_translation(self):
        pts = Homography.translation(3, -2).apply(np.array([[0.0, 0.0], [10.0, 5.0]]))
        np.testing.assert_allclose(pts, [[3.0, -2.0], [13.0, 3.0]])

    def test_rotation_keeps_center(self):
        h = Homography.rotation(30.0, center=(50.0, 40.0))
        np.testing.assert_allclose(h.apply(np.array([[50.0, 40.0]])), [[50.0, 40.0]], atol=1e-9)

    def test_list_round_trip(self, rng):
        h = random_homography(rng)
        assert Homography.from_list(h.to_list()).allclose(h, atol=1e-12)

    def test_from_list_wrong_length(self):
        with pytest.raises(DegenerateGeometryError):
            Homography.from_list([1.0, 0.0, 0.0])

    def test_corner_transfer_error_of_translation(self):
        err = Homography.translation(3, 4).corner_transfer_error(Homography.identity(), (100, 80))
        assert err == pytest.approx(5.0)


@pytest.mark.unit
class TestRigCalibration:
    """Test RigCalibration."""

    def test_defaults(self):
        rig = RigCalibration()
        assert rig.ir_resolution == (640, 512)
        assert rig.ev_resolution == (346, 260)

    def test_non_positive_resolution_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            RigCalibration(ir_resolution=(0, 10))

    def test_shared_sensor(self):
        assert RigCalibration.shared_sensor((64, 48)).is_shared_sensor
        assert not RigCalibration(Homography.translation(1, 0), (64, 48), (64, 48)).is_shared_sensor
        assert not RigCalibration(Homography.identity(), (64, 48), (32, 24)).is_shared_sensor

    def test_dict_round_trip(self, offset_rig):
        restored = RigCalibration.from_dict(json.loads(json.dumps(offset_rig.to_dict())))
        assert restored.h_ir_to_ev.allclose(offset_rig.h_ir_to_ev)
        assert restored.ir_resolution == offset_rig.ir_resolution
        assert restored.ev_resolution == offset_rig.ev_resolution


# ============================================================================
# Pose conjugation
# ============================================================================

@pytest.mark.unit
class TestComposeRelativeMotion:
    """Test transfer of thermal motion to the event camera."""

    def test_identity_motion(self, offset_rig):
        out = compose_relative_motion(Homography.identity(), offset_rig)
        assert out.allclose(Homography.identity(), atol=1e-12)

    def test_identity_rig(self, rng):
        h = random_homography(rng)
        out = compose_relative_motion(h, RigCalibration.shared_sensor((32, 32)))
        assert out.allclose(h, atol=1e-12)

    def test_half_scale_rig_halves_translation(self):
        rig = RigCalibration(Homography.scaling(0.5), (640, 512), (320, 256))
        out = compose_relative_motion(Homography.translation(10, 0), rig)
        assert out.allclose(Homography.translation(5, 0), atol=1e-12)

    def test_matches_matrix_product_oracle(self, rng):
        for _ in range(1000):
            rig_h, motion = random_homography(rng), random_homography(rng)
            rig = RigCalibration(rig_h)
            expected = rig_h.m @ motion.m @ np.linalg.inv(rig_h.m)
            expected = expected / expected[2, 2]
            np.testing.assert_allclose(compose_relative_motion(motion, rig).m, expected, atol=1e-9, rtol=0)

    def test_composition_homomorphism(self, rng):
        rig = RigCalibration(random_homography(rng))
        a, b = random_homography(rng), random_homography(rng)
        lhs = compose_relative_motion(a @ b, rig)
        rhs = compose_relative_motion(a, rig) @ compose_relative_motion(b, rig)
        assert lhs.allclose(rhs, atol=1e-9)

    def test_inverse_motion_cancels(self, rng):
        rig = RigCalibration(random_homography(rng))
        h = random_homography(rng)
        out = compose_relative_motion(h, rig) @ compose_relative_motion(h.inverse(), rig)
        assert out.allclose(Homography.identity(), atol=1e-9)


# ============================================================================
# Thermal ego-motion
# ============================================================================

@pytest.mark.unit
class TestEstimateThermalMotion:
    """Test robust thermal motion estimation."""

    def test_identical_frames_give_identity(self, texture):
        frame = ThermalFrame(texture)
        h = estimate_thermal_motion(frame, ThermalFrame(texture.copy()))
        assert h.allclose(Homography.identity(), atol=1e-3)

    def test_recovers_translation(self, texture):
        h = estimate_thermal_motion(ThermalFrame(texture), ThermalFrame(shift_image(texture, 5, 0)))
        assert h.m[0, 2] == pytest.approx(5.0, abs=0.5)
        assert h.m[1, 2] == pytest.approx(0.0, abs=0.5)

    def test_recovers_rotation(self, texture):
        truth = Homography.rotation(2.0, center=(127.5, 127.5))
        h = estimate_thermal_motion(ThermalFrame(texture), warp_frame(texture, truth))
        angle = np.degrees(np.arctan2(h.m[1, 0], h.m[0, 0]))
        assert angle == pytest.approx(2.0, abs=0.2)

    @pytest.mark.parametrize("seed", range(5))
    def test_corner_transfer_error(self, texture, seed):
        gen = np.random.default_rng(seed)
        tx, ty = gen.uniform(-7, 7, size=2)
        truth = Homography.rotation(float(gen.uniform(-1, 1)), center=(127.5, 127.5)) @ Homography.translation(tx, ty)
        h = estimate_thermal_motion(ThermalFrame(texture), warp_frame(texture, truth))
        assert h.corner_transfer_error(truth, (256, 256)) <= 0.5

    def test_flat_frames_raise_insufficient_features(self):
        flat = ThermalFrame(np.full((64, 64), 0.5, dtype=np.float32))
        with pytest.raises(InsufficientFeaturesError):
            estimate_thermal_motion(flat, flat)

    def test_retries_every_quality_level(self, mocker):
        estimator = MotionEstimator(CalibConfig(quality_levels=(0.05, 0.01, 0.001)))
        fit = mocker.patch.object(estimator, "_fit", side_effect=InsufficientFeaturesError(3, 20))
        flat = ThermalFrame(np.zeros((16, 16), dtype=np.float32))
        with pytest.raises(InsufficientFeaturesError):
            estimator.estimate(flat, flat)
        assert [c.args[2] for c in fit.call_args_list] == [0.05, 0.01, 0.001]

    def test_retry_succeeds_on_relaxed_level(self, mocker):
        estimator = MotionEstimator(CalibConfig(quality_levels=(0.05, 0.01)))
        mocker.patch.object(estimator, "_fit", side_effect=[InsufficientFeaturesError(3, 20), Homography.identity()])
        frame = ThermalFrame(np.zeros((16, 16), dtype=np.float32))
        assert estimator.estimate(frame, frame).allclose(Homography.identity())

    def test_degenerate_fit_not_retried(self, mocker):
        estimator = MotionEstimator()
        fit = mocker.patch.object(estimator, "_fit", side_effect=DegenerateGeometryError("rank"))
        frame = ThermalFrame(np.zeros((16, 16), dtype=np.float32))
        with pytest.raises(DegenerateGeometryError):
            estimator.estimate(frame, frame)
        assert fit.call_count == 1

    def test_collinear_inliers_rejected(self):
        estimator = MotionEstimator()
        xs = np.linspace(0, 100, 30)
        src = np.column_stack([xs, xs]).astype(np.float32)
        with pytest.raises(DegenerateGeometryError):
            estimator._robust_homography(src, src + 1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            estimate_thermal_motion(ThermalFrame(np.zeros((8, 8))), ThermalFrame(np.zeros((8, 9))))

    def test_logs_fit(self, texture, mock_logger):
        MotionEstimator(logger=mock_logger).estimate(ThermalFrame(texture), ThermalFrame(shift_image(texture, 2, 1)))
        events = [c.kwargs["extra"]["event"] for c in mock_logger.debug.call_args_list if "extra" in c.kwargs]
        assert "motion_estimated" in events


# ============================================================================
# Inter-modality registration
# ============================================================================

@pytest.mark.unit
class TestRegisterModalities:
    """Test event-to-thermal registration."""

    def test_identical_rasters(self, texture):
        h = register_modalities(texture, ThermalFrame(texture))
        assert h.allclose(Homography.identity(), atol=1e-3)

    def test_recovers_downscale(self):
        ir = make_texture(size=256, sigma=1.5, seed=21)
        ev = cv2.resize(ir, (138, 138), interpolation=cv2.INTER_AREA)
        h = register_modalities(ev, ThermalFrame(ir))
        expected = 256 / 138
        assert h.m[0, 0] == pytest.approx(expected, rel=0.02)
        assert h.m[1, 1] == pytest.approx(expected, rel=0.02)

    def test_constant_rasters_raise(self):
        flat = np.full((64, 64), 0.3, dtype=np.float32)
        with pytest.raises(InsufficientFeaturesError):
            register_modalities(flat, ThermalFrame(flat))

    def test_calibrate_rig_stores_inverse(self, texture):
        ev = texture[:200, :220]
        rig = calibrate_rig(ev, ThermalFrame(texture))
        assert rig.ev_resolution == (220, 200)
        assert rig.ir_resolution == (256, 256)
        assert rig.h_ev_to_ir.corner_transfer_error(Homography.identity(), (220, 200)) < 0.5


@pytest.mark.unit
class TestRigFile:
    """Test the JSON calibration file."""

    def test_round_trip_with_clock(self, tmp_path, offset_rig):
        path = save_rig(tmp_path / "rig.json", offset_rig, FrameClock(30000, 100))
        rig, clock = load_rig(path)
        assert rig.h_ir_to_ev.allclose(offset_rig.h_ir_to_ev)
        assert clock == FrameClock(30000, 100)

    def test_without_clock(self, tmp_path, offset_rig):
        rig, clock = load_rig(save_rig(tmp_path / "rig.json", offset_rig))
        assert clock is None
        assert rig.ev_resolution == (60, 50)

    def test_keys(self, tmp_path, offset_rig):
        doc = json.loads(save_rig(tmp_path / "rig.json", offset_rig).read_text())
        assert set(doc) == {"h_ir_to_ev", "ir_resolution", "ev_resolution"}
        assert len(doc["h_ir_to_ev"]) == 9

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileOperationError):
            load_rig(tmp_path / "nope.json")

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "rig.json"
        path.write_text('{"h_ir_to_ev": [1, 0]}')
        with pytest.raises(FileOperationError):
            load_rig(path)
