"""Shared test fixtures and synthetic data."""
import logging
from pathlib import Path
from unittest.mock import Mock

import cv2
import numpy as np
import pytest
import torch

from src.models.frames import EventFrame, ThermalFrame
from src.models.geometry import Homography, RigCalibration
from src.services.simgen import render_signage_scene, write_scene
from src.utils.config import (
    PipelineConfig,
    PseudoGtConfig,
    SimConfig,
    SisConfig,
    TccConfig,
    TrainConfig,
)


# ============================================================================
# Logging
# ============================================================================

@pytest.fixture
def mock_logger():
    """Mock logger for testing."""
    logger = Mock(spec=logging.Logger)
    logger.info = Mock()
    logger.debug = Mock()
    logger.warning = Mock()
    logger.error = Mock()
    return logger


# ============================================================================
# Rasters
# ============================================================================

@pytest.fixture
def rng():
    """Seeded generator, fresh per test."""
    return np.random.default_rng(1234)


def make_texture(size=256, sigma=2.0, seed=7) -> np.ndarray:
    """Blurred white noise stretched to [0, 1]; rich in trackable corners."""
    noise = np.random.default_rng(seed).random((size, size)).astype(np.float32)
    img = cv2.GaussianBlur(noise, (0, 0), sigma)
    return ((img - img.min()) / (img.max() - img.min())).astype(np.float32)


def make_natural_image(size=192, seed=3) -> np.ndarray:
    """1/f-spectrum noise image, a stand-in for natural scene statistics."""
    gen = np.random.default_rng(seed)
    fy = np.fft.fftfreq(size)[:, None]
    fx = np.fft.fftfreq(size)[None, :]
    radius = np.sqrt(fx * fx + fy * fy)
    radius[0, 0] = 1.0
    spectrum = (gen.normal(size=(size, size)) + 1j * gen.normal(size=(size, size))) / radius
    spectrum[0, 0] = 0.0
    img = np.real(np.fft.ifft2(spectrum))
    return ((img - img.min()) / (img.max() - img.min())).astype(np.float64)


def shift_image(img: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Content moved by (dx, dy) with reflected borders."""
    m = np.float32([[1, 0, dx], [0, 1, dy]])
    h, w = img.shape
    return cv2.warpAffine(img, m, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT)


@pytest.fixture
def texture():
    return make_texture()


@pytest.fixture
def natural_image():
    return make_natural_image()


@pytest.fixture
def event_frame():
    """8x8 event frame with a 2x2 active block."""
    pixels = np.zeros((8, 8), dtype=np.float32)
    pixels[3:5, 3:5] = 1.0
    return EventFrame(pixels)


@pytest.fixture
def thermal_frame():
    return ThermalFrame(np.full((8, 8), 0.25, dtype=np.float32))


@pytest.fixture
def shared_rig():
    return RigCalibration.shared_sensor((64, 64))


@pytest.fixture
def offset_rig():
    """Event camera 60x50 sitting 3 px right, 2 px down of the thermal grid."""
    return RigCalibration(Homography.translation(-3, -2), (64, 56), (60, 50))


# ============================================================================
# Configurations
# ============================================================================

@pytest.fixture
def tiny_sis_config():
    return SisConfig(levels=2, base_channels=4, norm_groups=2)


@pytest.fixture
def tiny_tcc_config():
    return TccConfig(
        n_frames=3, window=(2, 4, 4), stage_depths=(2, 1, 1, 1),
        embed_dim=8, heads=(2, 2, 2, 2), decoder_window=4, decoder_heads=2,
    )


@pytest.fixture
def no_denoise_pseudo_gt():
    return PseudoGtConfig(denoise=False)


@pytest.fixture
def small_sim_config():
    return SimConfig(group_len=3)


@pytest.fixture
def smoke_config(tmp_path):
    """Pipeline config small enough to train on CPU in a test."""
    return PipelineConfig(
        sis=SisConfig(levels=2, base_channels=4, norm_groups=2),
        tcc=TccConfig(
            n_frames=3, window=(2, 4, 4), stage_depths=(2, 1, 1, 1),
            embed_dim=8, heads=(2, 2, 2, 2), decoder_window=4, decoder_heads=2,
        ),
        train=TrainConfig(
            batch_size=2, epochs=2, crop=32, group_len=3, stride=3, seed=11,
            checkpoint_dir=str(tmp_path / "ckpt"),
        ),
    )


# ============================================================================
# Gradient checks
# ============================================================================

def finite_difference_check(module, loss_fn, n_checks=10, seed=0, step=1e-7):
    """
    Compare autograd against central differences on random parameter entries.

    ``module`` must already be in double precision; ``loss_fn()`` evaluates
    the scalar loss. Returns a list of (name, analytic, numeric) tuples that
    violate |a - n| <= 1e-3 * max(|a|, |n|) + 1e-7.
    """
    params = [(name, p) for name, p in module.named_parameters() if p.requires_grad]
    module.zero_grad()
    loss_fn().backward()
    gen = np.random.default_rng(seed)
    failures = []
    with torch.no_grad():
        for _ in range(n_checks):
            name, p = params[int(gen.integers(len(params)))]
            flat = p.view(-1)
            i = int(gen.integers(flat.numel()))
            analytic = float(p.grad.view(-1)[i])
            original = float(flat[i])
            flat[i] = original + step
            up = float(loss_fn())
            flat[i] = original - step
            down = float(loss_fn())
            flat[i] = original
            numeric = (up - down) / (2 * step)
            if abs(analytic - numeric) > 1e-3 * max(abs(analytic), abs(numeric)) + 1e-7:
                failures.append((name, analytic, numeric))
    return failures


# ============================================================================
# Scenes on disk
# ============================================================================

PAN_PX = 2


def pan_motion(frame_prev: ThermalFrame, frame_cur: ThermalFrame) -> Homography:
    """Known ego-motion of the synthetic scenes (one frame step)."""
    dt = round((frame_cur.t_us - frame_prev.t_us) / SimConfig().window_us)
    return Homography.translation(-PAN_PX * dt, 0)


def write_synthetic_dataset(root: Path, n_scenes=2, n_frames=6, size=(64, 64), seed=0) -> Path:
    for i in range(n_scenes):
        frames = render_signage_scene(n_frames, size, PAN_PX, seed=seed + i)
        write_scene(root / f"scene_{i:03d}", frames)
    return root


@pytest.fixture
def dataset_root(tmp_path):
    """Two 6-frame synthetic scenes of 64x64."""
    return write_synthetic_dataset(tmp_path / "data")
