"""Group-consistent geometric augmentation."""
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from ..utils.exceptions import InvalidInputShapeError, ShapeMismatchError


@dataclass(frozen=True)
class GeometricTransform:
    """Crop window, horizontal flip and quarter-turn count."""
    y: int
    x: int
    height: int
    width: int
    flip: bool = False
    quarter_turns: int = 0

    def apply(self, stack: np.ndarray) -> np.ndarray:
        """Transform a (..., H, W) stack over its last two axes."""
        out = stack[..., self.y:self.y + self.height, self.x:self.x + self.width]
        if self.flip:
            out = out[..., :, ::-1]
        if self.quarter_turns:
            out = np.rot90(out, self.quarter_turns, axes=(-2, -1))
        return np.ascontiguousarray(out)


def crop_size(height: int, width: int, crop: Optional[int], factor: int) -> Tuple[int, int]:
    """
    Crop (height, width) rounded down to multiples of ``factor``.

    ``crop=None`` keeps a quarter of the area (half of each dimension).
    """
    if crop is None:
        ch, cw = height // 2, width // 2
    else:
        ch, cw = min(crop, height), min(crop, width)
    ch, cw = ch - ch % factor, cw - cw % factor
    if ch < factor or cw < factor:
        raise InvalidInputShapeError(
            "augment", f"frame {width}x{height} too small for crops divisible by {factor}"
        )
    return ch, cw


def sample_transform(
    rng: np.random.Generator,
    height: int,
    width: int,
    crop: Optional[int],
    factor: int,
    augment: bool = True,
) -> GeometricTransform:
    ch, cw = crop_size(height, width, crop, factor)
    y = int(rng.integers(0, height - ch + 1))
    x = int(rng.integers(0, width - cw + 1))
    if not augment:
        return GeometricTransform(y, x, ch, cw)
    flip = bool(rng.integers(0, 2))
    # non-square windows only take half turns so batch shapes stay fixed
    turns = int(rng.integers(0, 4)) if ch == cw else 2 * int(rng.integers(0, 2))
    return GeometricTransform(y, x, ch, cw, flip, turns)


def random_crop_augment(
    arrays: Dict[str, np.ndarray],
    rng: np.random.Generator,
    crop: Optional[int],
    levels: int,
    augment: bool = True,
) -> Dict[str, np.ndarray]:
    """
    Apply one sampled crop, flip and rotation identically to every raster.

    Args:
        arrays: Stacks sharing their last two dimensions
        crop: Square side, or None for a quarter-area window
        levels: Encoder depth K; crops stay divisible by 2^K

    Raises:
        ShapeMismatchError: If the stacks disagree in spatial size
    """
    sizes = {name: a.shape[-2:] for name, a in arrays.items()}
    first = next(iter(sizes.values()))
    for name, size in sizes.items():
        if size != first:
            raise ShapeMismatchError(f"augment input {name}", tuple(first), tuple(size))
    transform = sample_transform(rng, first[0], first[1], crop, 2 ** levels, augment)
    return {name: transform.apply(a) for name, a in arrays.items()}
