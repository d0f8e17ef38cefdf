"""No-reference image quality: entropy, standard deviation and NIQE."""
import io
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np
import scipy.linalg
import scipy.ndimage
import scipy.special

from ..models.reports import NiqeModel
from ..utils.config import NiqeConfig
from ..utils.exceptions import NiqeModelError, FileOperationError
from ..utils.logger import get_logger
from ..utils.validators import RasterValidator

logger = get_logger("metrics")

NIQE_MAGIC = b"UTASIGN-NIQE-v1\n"
NIQE_FEATURES = 36

# Moment-ratio lookup for generalised Gaussian shape fitting
GAMMA_RANGE = np.arange(0.2, 10.0, 0.001)
_A = scipy.special.gamma(2.0 / GAMMA_RANGE) ** 2
_B = scipy.special.gamma(1.0 / GAMMA_RANGE)
_C = scipy.special.gamma(3.0 / GAMMA_RANGE)
PREC_GAMMAS = _A / (_B * _C)


# ============================================================================
# Entropy and standard deviation
# ============================================================================

def _levels(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.int64)


def entropy(img: np.ndarray) -> float:
    """Shannon entropy in bits of the 256-bin intensity histogram."""
    levels = _levels(img).ravel()
    if levels.size == 0:
        return 0.0
    p = np.bincount(levels, minlength=256) / levels.size
    p = p[p > 0]
    return float(abs(-np.sum(p * np.log2(p))))


def std_dev(img: np.ndarray) -> float:
    """Population standard deviation on the 0-255 scale."""
    values = np.asarray(img, dtype=np.float64) * 255.0
    return float(np.std(values)) if values.size else 0.0


def masked_entropy(img: np.ndarray, mask: np.ndarray) -> float:
    """Entropy over the pixels selected by ``mask`` (0 for an empty mask)."""
    return entropy(np.asarray(img)[np.asarray(mask, dtype=bool)])


def masked_std_dev(img: np.ndarray, mask: np.ndarray) -> float:
    """Standard deviation over the pixels selected by ``mask``."""
    return std_dev(np.asarray(img)[np.asarray(mask, dtype=bool)])


# ============================================================================
# NIQE features
# ============================================================================

def _gauss_window(half_width: int = 3, sigma: float = 7.0 / 6.0) -> np.ndarray:
    x = np.arange(-half_width, half_width + 1, dtype=np.float64)
    w = np.exp(-0.5 * x * x / (sigma * sigma))
    return w / w.sum()


def mscn_transform(image: np.ndarray, c: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean-subtracted contrast-normalised coefficients of a 0-255 image.

    Returns:
        (mscn, local sigma)
    """
    img = np.asarray(image, dtype=np.float64)
    window = _gauss_window()
    mu = scipy.ndimage.correlate1d(img, window, axis=0, mode="constant")
    mu = scipy.ndimage.correlate1d(mu, window, axis=1, mode="constant")
    sq = scipy.ndimage.correlate1d(img * img, window, axis=0, mode="constant")
    sq = scipy.ndimage.correlate1d(sq, window, axis=1, mode="constant")
    sigma = np.sqrt(np.abs(sq - mu * mu))
    return (img - mu) / (sigma + c), sigma


def ggd_features(data: np.ndarray) -> Tuple[float, float]:
    """Shape and variance of a zero-mean generalised Gaussian fit."""
    data = data.ravel()
    sigma_sq = float(np.mean(data * data))
    e_abs = float(np.mean(np.abs(data)))
    if sigma_sq == 0 or e_abs == 0:
        return float(GAMMA_RANGE[-1]), 0.0
    rho = sigma_sq / (e_abs * e_abs)
    pos = int(np.argmin(np.abs(1.0 / PREC_GAMMAS - rho)))
    return float(GAMMA_RANGE[pos]), sigma_sq


def aggd_features(data: np.ndarray) -> Tuple[float, float, float, float]:
    """Shape, mean, left and right variance of an asymmetric GGD fit."""
    data = data.ravel()
    left = data[data < 0]
    right = data[data >= 0]
    left_std = np.sqrt(np.mean(left * left)) if len(left) else 0.0
    right_std = np.sqrt(np.mean(right * right)) if len(right) else 0.0
    mean_sq = float(np.mean(data * data))
    if right_std == 0 or mean_sq == 0:
        return float(GAMMA_RANGE[-1]), 0.0, float(left_std ** 2), float(right_std ** 2)

    gamma_hat = left_std / right_std
    r_hat = float(np.mean(np.abs(data))) ** 2 / mean_sq
    r_norm = r_hat * (gamma_hat ** 3 + 1) * (gamma_hat + 1) / (gamma_hat ** 2 + 1) ** 2
    alpha = float(GAMMA_RANGE[int(np.argmin((PREC_GAMMAS - r_norm) ** 2))])

    g1 = scipy.special.gamma(1.0 / alpha)
    g2 = scipy.special.gamma(2.0 / alpha)
    g3 = scipy.special.gamma(3.0 / alpha)
    ratio = np.sqrt(g1 / g3)
    bl, br = ratio * left_std, ratio * right_std
    mean = (br - bl) * g2 / g1
    return alpha, float(mean), float(bl * bl), float(br * br)


PAIR_SHIFTS = ((0, 1), (1, 0), (1, 1), (1, -1))


def paired_products(mscn: np.ndarray) -> List[np.ndarray]:
    """
    Products of the MSCN image with its horizontal, vertical and two diagonal
    neighbours, shifted over the whole image (wrapping at the image border).
    """
    return [mscn * np.roll(mscn, (dy, dx), axis=(0, 1)) for dy, dx in PAIR_SHIFTS]


def patch_features(mscn: np.ndarray, products: Sequence[np.ndarray]) -> np.ndarray:
    """18 natural-scene-statistics features of one MSCN patch and its paired products."""
    alpha, sigma_sq = ggd_features(mscn)
    feats = [alpha, sigma_sq]
    for product in products:
        feats.extend(aggd_features(product))
    return np.asarray(feats, dtype=np.float64)


def _scale_features(image: np.ndarray, patch: int) -> Tuple[np.ndarray, np.ndarray]:
    mscn, sigma = mscn_transform(image)
    products = paired_products(mscn)
    h, w = mscn.shape
    feats, sharpness = [], []
    for y in range(0, h - patch + 1, patch):
        for x in range(0, w - patch + 1, patch):
            window = (slice(y, y + patch), slice(x, x + patch))
            feats.append(patch_features(mscn[window], [p[window] for p in products]))
            sharpness.append(float(np.mean(sigma[y:y + patch, x:x + patch])))
    return np.asarray(feats).reshape(-1, 18), np.asarray(sharpness)


def image_features(img: np.ndarray, patch_size: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-patch features at full and half scale.

    Returns:
        (features of shape (patches, 36), per-patch sharpness)

    Raises:
        NiqeModelError: If the image is smaller than one patch
    """
    RasterValidator.validate_unit_raster("quality image", img)
    h, w = np.shape(img)
    if h < patch_size or w < patch_size:
        raise NiqeModelError(f"image {w}x{h} smaller than patch size {patch_size}")
    full = np.asarray(img, dtype=np.float64) * 255.0
    half = cv2.resize(full, (w // 2, h // 2), interpolation=cv2.INTER_CUBIC)

    f1, sharpness = _scale_features(full, patch_size)
    f2, _ = _scale_features(half, patch_size // 2)
    n = min(len(f1), len(f2))
    return np.hstack([f1[:n], f2[:n]]), sharpness[:n]


# ============================================================================
# NIQE model
# ============================================================================

def fit_niqe(images: Iterable[np.ndarray], config: Optional[NiqeConfig] = None) -> NiqeModel:
    """
    Fit the pristine multivariate Gaussian from sharp patches.

    Raises:
        NiqeModelError: If fewer than two sharp patches are available
    """
    cfg = config or NiqeConfig()
    selected = []
    for img in images:
        feats, sharpness = image_features(img, cfg.patch_size)
        if len(sharpness) == 0 or sharpness.max() <= 0:
            continue
        keep = sharpness > cfg.sharpness_fraction * sharpness.max()
        selected.append(feats[keep])
    if not selected or sum(len(s) for s in selected) < 2:
        raise NiqeModelError("need at least two sharp pristine patches")

    feats = np.vstack(selected)
    cov = np.cov(feats, rowvar=False)
    cov = (cov + cov.T) / 2.0
    logger.info(f"Fitted NIQE model on {len(feats)} patches")
    return NiqeModel(feats.mean(axis=0), cov, cfg.patch_size, cfg.sharpness_fraction)


def niqe(img: np.ndarray, model: NiqeModel) -> float:
    """Distance between the image's patch statistics and the pristine model (lower is better)."""
    feats, _ = image_features(img, model.patch_size)
    if feats.shape[1] != model.dims:
        raise NiqeModelError(f"model has {model.dims} features, image gives {feats.shape[1]}")
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False) if len(feats) > 1 else np.zeros_like(model.cov)
    diff = model.mean - mu
    pooled = scipy.linalg.pinv((model.cov + cov) / 2.0)
    return float(np.sqrt(max(float(diff @ pooled @ diff), 0.0)))


def save_niqe_model(path: Union[str, Path], model: NiqeModel) -> Path:
    """Write the versioned binary model file."""
    path = Path(path)
    buffer = io.BytesIO()
    np.savez(buffer, mean=model.mean, cov=model.cov,
             patch_size=np.int64(model.patch_size),
             sharpness_fraction=np.float64(model.sharpness_fraction))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(NIQE_MAGIC + buffer.getvalue())
    except OSError as e:
        raise FileOperationError("write", str(path), str(e))
    return path


def load_niqe_model(path: Union[str, Path]) -> NiqeModel:
    """
    Read a model written by :func:`save_niqe_model`.

    Raises:
        FileOperationError: If the file is missing
        NiqeModelError: If the file is not a model of this format
    """
    path = Path(path)
    if not path.is_file():
        raise FileOperationError("read", str(path), "NIQE model not found")
    raw = path.read_bytes()
    if not raw.startswith(NIQE_MAGIC):
        raise NiqeModelError(f"{path} is not a {NIQE_MAGIC.strip().decode()} file")
    try:
        with np.load(io.BytesIO(raw[len(NIQE_MAGIC):]), allow_pickle=False) as data:
            return NiqeModel(data["mean"], data["cov"], int(data["patch_size"]),
                             float(data["sharpness_fraction"]))
    except (ValueError, KeyError, OSError) as e:
        raise NiqeModelError(f"corrupted model payload: {e}")
