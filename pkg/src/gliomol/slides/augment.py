"""Shape-preserving patch augmentations: crop-shift, blur, flips, erasing.

Each op keeps the (300, 300, 3) shape and is the identity when the config
is disabled, so augmentation can be switched off without touching callers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter


@dataclass
class AugmentConfig:
    enabled: bool = True
    crop_pad: int = 12  # reflect-pad margin for the random crop window
    crop_p: float = 0.5
    blur_p: float = 0.2
    blur_sigma: tuple = (0.2, 0.6)  # heavier blur would wash out fine texture
    flip_p: float = 0.5
    erase_p: float = 0.25
    erase_frac: tuple = (0.02, 0.10)


def augment_patch(img: np.ndarray, rng: np.random.Generator, cfg: AugmentConfig) -> np.ndarray:
    if not cfg.enabled:
        return img
    out = img
    if cfg.crop_pad > 0 and rng.random() < cfg.crop_p:
        m = cfg.crop_pad
        padded = np.pad(out, ((m, m), (m, m), (0, 0)), mode="reflect")
        oy = int(rng.integers(0, 2 * m + 1))
        ox = int(rng.integers(0, 2 * m + 1))
        out = padded[oy : oy + img.shape[0], ox : ox + img.shape[1]]
    if rng.random() < cfg.blur_p:
        sigma = float(rng.uniform(*cfg.blur_sigma))
        out = gaussian_filter(out, sigma=(sigma, sigma, 0.0))
    if rng.random() < cfg.flip_p:
        out = out[::-1, :, :]
    if rng.random() < cfg.flip_p:
        out = out[:, ::-1, :]
    if rng.random() < cfg.erase_p:
        h, w = out.shape[:2]
        frac = float(rng.uniform(*cfg.erase_frac))
        area = frac * h * w
        eh = int(np.sqrt(area * float(rng.uniform(0.5, 2.0))))
        eh = max(1, min(eh, h))
        ew = max(1, min(int(area / eh), w))
        y0 = int(rng.integers(0, h - eh + 1))
        x0 = int(rng.integers(0, w - ew + 1))
        out = out.copy()
        out[y0 : y0 + eh, x0 : x0 + ew, :] = 0.0
    return np.ascontiguousarray(out)
