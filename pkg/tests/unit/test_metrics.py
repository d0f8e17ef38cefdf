"""
Tests for entropy, standard deviation and the NIQE quality model.
"""
import cv2
import numpy as np
import pytest

from src.models.reports import NiqeModel
from src.services.metrics import (
    NIQE_FEATURES,
    NIQE_MAGIC,
    aggd_features,
    entropy,
    fit_niqe,
    ggd_features,
    image_features,
    load_niqe_model,
    masked_entropy,
    masked_std_dev,
    niqe,
    paired_products,
    save_niqe_model,
    std_dev,
)
from src.utils.config import NiqeConfig
from src.utils.exceptions import FileOperationError, NiqeModelError
from tests.fixtures import make_natural_image

PATCH = 32


def pristine_images():
    return [make_natural_image(seed=s) for s in range(6)]


@pytest.fixture(scope="module")
def niqe_model():
    return fit_niqe(pristine_images(), NiqeConfig(patch_size=PATCH))


def add_noise(img, sigma, seed=0):
    noise = np.random.default_rng(seed).normal(0.0, sigma, img.shape)
    return np.clip(img + noise, 0.0, 1.0)


# ============================================================================
# Entropy and standard deviation
# ============================================================================

@pytest.mark.unit
class TestEntropyAndStd:
    """Test the histogram-based scores."""

    def test_constant_image(self):
        img = np.full((16, 16), 0.4)
        assert entropy(img) == 0.0
        assert std_dev(img) == pytest.approx(0.0, abs=1e-9)

    def test_two_equal_levels(self):
        img = np.zeros((8, 8))
        img[:, 4:] = 1.0
        assert entropy(img) == pytest.approx(1.0)
        assert std_dev(img) == pytest.approx(127.5)

    def test_all_levels_once(self):
        img = (np.arange(256) / 255.0).reshape(16, 16)
        assert entropy(img) == pytest.approx(8.0)

    def test_uniform_noise_std(self, rng):
        assert std_dev(rng.random((1000, 1000))) == pytest.approx(255 / np.sqrt(12), abs=1.0)
        assert std_dev(rng.random((1000, 1000))) == pytest.approx(73.6, abs=1.0)

    def test_permutation_invariant(self, rng):
        img = rng.random((20, 20))
        shuffled = rng.permutation(img.ravel()).reshape(20, 20)
        assert entropy(img) == pytest.approx(entropy(shuffled))
        assert std_dev(img) == pytest.approx(std_dev(shuffled))

    def test_bounds(self, rng):
        for _ in range(20):
            img = rng.random((32, 32)) ** rng.uniform(0.2, 5.0)
            assert 0.0 <= entropy(img) <= 8.0
            assert 0.0 <= std_dev(img) <= 127.5

    def test_masked_scores(self):
        img = np.zeros((8, 8))
        img[:, 4:] = 1.0
        mask = np.zeros((8, 8), dtype=bool)
        mask[:, 2:6] = True
        assert masked_entropy(img, mask) == pytest.approx(1.0)
        assert masked_std_dev(img, mask) == pytest.approx(127.5)
        assert masked_entropy(img, np.zeros((8, 8))) == 0.0
        assert masked_std_dev(img, np.zeros((8, 8))) == 0.0


# ============================================================================
# Distribution fits
# ============================================================================

@pytest.mark.unit
class TestDistributionFits:
    """Test generalised Gaussian moment matching."""

    def test_gaussian_shape_is_two(self, rng):
        alpha, var = ggd_features(rng.normal(0.0, 1.5, 200000))
        assert alpha == pytest.approx(2.0, abs=0.1)
        assert var == pytest.approx(2.25, rel=0.02)

    def test_laplacian_shape_is_one(self, rng):
        alpha, _ = ggd_features(rng.laplace(0.0, 1.0, 200000))
        assert alpha == pytest.approx(1.0, abs=0.1)

    def test_symmetric_aggd(self, rng):
        alpha, mean, left, right = aggd_features(rng.normal(0.0, 1.0, 200000))
        assert alpha == pytest.approx(2.0, abs=0.15)
        assert mean == pytest.approx(0.0, abs=0.02)
        assert left == pytest.approx(right, rel=0.05)

    def test_paired_products_use_image_neighbours(self, rng):
        mscn = rng.standard_normal((8, 8))
        horizontal, vertical, diagonal, anti_diagonal = paired_products(mscn)
        np.testing.assert_array_equal(horizontal[:, 4], mscn[:, 4] * mscn[:, 3])
        np.testing.assert_array_equal(vertical[4], mscn[4] * mscn[3])
        assert diagonal[4, 4] == mscn[4, 4] * mscn[3, 3]
        assert anti_diagonal[4, 3] == mscn[4, 3] * mscn[3, 4]

    def test_zero_data(self):
        alpha, var = ggd_features(np.zeros(100))
        assert var == 0.0 and np.isfinite(alpha)


# ============================================================================
# NIQE
# ============================================================================

@pytest.mark.unit
class TestNiqe:
    """Test model fitting, scoring and persistence."""

    def test_feature_dimensionality(self):
        feats, sharpness = image_features(make_natural_image(), PATCH)
        assert feats.shape == (36, NIQE_FEATURES)
        assert len(sharpness) == 36

    def test_model_shape_and_psd(self, niqe_model):
        assert niqe_model.dims == 36
        assert niqe_model.patch_size == PATCH
        assert np.linalg.eigvalsh(niqe_model.cov).min() >= -1e-10

    def test_fit_is_deterministic(self, niqe_model):
        again = fit_niqe(pristine_images(), NiqeConfig(patch_size=PATCH))
        assert np.array_equal(again.mean, niqe_model.mean)
        assert np.array_equal(again.cov, niqe_model.cov)

    def test_score_finite_non_negative(self, niqe_model, rng):
        for img in (make_natural_image(seed=11), rng.random((128, 128)), np.full((64, 64), 0.5)):
            score = niqe(img, niqe_model)
            assert np.isfinite(score) and score >= 0.0

    def test_noise_raises_score(self, niqe_model):
        img = make_natural_image(seed=0)
        assert niqe(img, niqe_model) < niqe(add_noise(img, 50 / 255), niqe_model)

    def test_noise_sweep_non_decreasing(self, niqe_model):
        img = make_natural_image(seed=20)
        scores = [niqe(add_noise(img, s / 255, seed=1), niqe_model) for s in (10, 30, 60)]
        assert scores[0] <= scores[1] <= scores[2]

    def test_blur_sweep_non_decreasing(self, niqe_model):
        img = make_natural_image(seed=21)
        scores = [niqe(cv2.GaussianBlur(img, (0, 0), s), niqe_model) for s in (1, 2, 4)]
        assert scores[0] <= scores[1] <= scores[2]

    def test_image_smaller_than_patch(self, niqe_model):
        with pytest.raises(NiqeModelError):
            niqe(np.zeros((16, 16)), niqe_model)

    def test_flat_corpus_rejected(self):
        with pytest.raises(NiqeModelError):
            fit_niqe([np.zeros((64, 64))], NiqeConfig(patch_size=PATCH))

    def test_dimension_mismatch(self):
        model = NiqeModel(np.zeros(4), np.eye(4), PATCH)
        with pytest.raises(NiqeModelError):
            niqe(make_natural_image(), model)

    def test_model_validation(self):
        with pytest.raises(NiqeModelError):
            NiqeModel(np.zeros(3), np.eye(4))
        with pytest.raises(NiqeModelError):
            NiqeModel(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))
        with pytest.raises(NiqeModelError):
            NiqeModel(np.array([0.0, np.nan]), np.eye(2))

    def test_save_load_round_trip(self, tmp_path, niqe_model):
        path = save_niqe_model(tmp_path / "niqe.bin", niqe_model)
        assert path.read_bytes().startswith(NIQE_MAGIC)
        back = load_niqe_model(path)
        assert np.array_equal(back.mean, niqe_model.mean)
        assert np.array_equal(back.cov, niqe_model.cov)
        assert (back.patch_size, back.sharpness_fraction) == (PATCH, 0.75)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "niqe.bin"
        path.write_bytes(b"NOT-A-MODEL\n" + b"\x00" * 32)
        with pytest.raises(NiqeModelError):
            load_niqe_model(path)

    def test_corrupted_payload(self, tmp_path):
        path = tmp_path / "niqe.bin"
        path.write_bytes(NIQE_MAGIC + b"garbage")
        with pytest.raises(NiqeModelError):
            load_niqe_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileOperationError):
            load_niqe_model(tmp_path / "none.bin")
