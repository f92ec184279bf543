"""Generators for synthetic test imagery and kernels."""

from __future__ import annotations

import numpy as np

from .conv import conv_fft
from .warp import WarpMatrix, n_features


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Normalised, centred isotropic Gaussian on a ``size`` x ``size`` grid."""
    if size < 1 or size % 2 == 0:
        raise ValueError("kernel size must be odd and positive")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    r = np.arange(size) - size // 2
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def delta_kernel(size: int) -> np.ndarray:
    if size < 1 or size % 2 == 0:
        raise ValueError("kernel size must be odd and positive")
    k = np.zeros((size, size))
    k[size // 2, size // 2] = 1.0
    return k


def smooth_random_image(
    shape: tuple[int, int],
    sigma: float | tuple[float, ...],
    seed: int,
    lo: float = 0.1,
    hi: float = 0.9,
) -> np.ndarray:
    """Low-passed white noise rescaled to ``[lo, hi]``.

    ``sigma`` may be a tuple, in which case independent layers filtered at each
    scale are summed with equal variance, giving both coarse and fine texture.
    """
    rng = np.random.default_rng(seed)
    sigmas = (sigma,) if np.isscalar(sigma) else tuple(sigma)
    img = np.zeros(shape)
    for s in sigmas:
        p = 2 * int(np.ceil(3 * s)) + 1
        h = p // 2
        noise = rng.standard_normal((shape[0] + 2 * h, shape[1] + 2 * h))
        layer = conv_fft(noise, gaussian_kernel(p, s), "valid")
        img += (layer - layer.mean()) / layer.std()
    img -= img.min()
    img /= img.max()
    return lo + (hi - lo) * img


def text_like_image(shape: tuple[int, int], seed: int, cell: int = 12, background: float = 0.9, ink: float = 0.1) -> np.ndarray:
    """Dark glyph-like blocks and strokes on a light background, in text lines."""
    rng = np.random.default_rng(seed)
    m, n = shape
    img = np.full(shape, background)
    line_h = 2 * cell
    for top in range(cell // 2, m - cell, line_h):
        left = cell // 2
        while left + cell < n - cell // 2:
            if rng.random() < 0.15:
                left += cell  # word gap
                continue
            glyph = rng.random((3, 2)) < 0.5
            sub = cell // 3
            for a in range(3):
                for b in range(2):
                    if glyph[a, b]:
                        r0 = top + a * sub
                        c0 = left + b * (cell // 2)
                        img[r0 : r0 + sub, c0 : c0 + max(2, cell // 4)] = ink
            # horizontal stroke
            r = top + int(rng.integers(0, cell - 2))
            img[r : r + 2, left : left + cell - 2] = ink
            left += cell
    return img


def random_warp(degree: int, max_perturbation: float, seed: int) -> WarpMatrix:
    """Identity plus coefficients drawn uniformly from ``[-max_perturbation, max_perturbation]``."""
    rng = np.random.default_rng(seed)
    delta = rng.uniform(-max_perturbation, max_perturbation, size=(2, n_features(degree)))
    return WarpMatrix(WarpMatrix.identity(degree).coeffs + delta, degree)
