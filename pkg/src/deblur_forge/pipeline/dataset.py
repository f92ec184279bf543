"""Training-pair synthesis, dataset assembly and patch sampling.

Random draws use numpy's ``Generator`` with the PCG64 bit generator, so a
given seed yields the same crops and noise on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np

from ..conv import conv_fft
from ..psf import PsfModel, crop_to_valid
from ..warp import WarpMatrix, warp_image

PATCH_SIZE = 320
NOISE_SIGMA = 3e-2


@dataclass(frozen=True)
class AlignedPair:
    sharp: np.ndarray
    blurry: np.ndarray
    source: str  # "measured" or "synthetic"


@dataclass(frozen=True)
class PatchPair:
    sharp_patch: np.ndarray
    blurry_patch: np.ndarray
    source: str
    origin: tuple[int, int]


def synth_blur(sharp: np.ndarray, model: PsfModel) -> np.ndarray:
    """Forward model: valid convolution with the kernel plus the offset."""
    sharp = np.asarray(sharp, dtype=np.float64)
    if model.size > min(sharp.shape):
        raise ValueError(f"kernel {model.size}x{model.size} larger than image {sharp.shape}")
    return conv_fft(sharp, model.kernel, "valid") + model.tau


def synth_pair(sharp: np.ndarray, model: PsfModel) -> AlignedPair:
    """Blurred image together with the sharp image cropped to the same footprint."""
    return AlignedPair(crop_to_valid(sharp, model.size), synth_blur(sharp, model), "synthetic")


def default_train_count(n_pairs: int) -> int:
    return (9 * n_pairs) // 10


def make_dataset(
    pairs: Sequence[tuple[np.ndarray, np.ndarray, WarpMatrix]],
    naturals: Sequence[np.ndarray],
    model: PsfModel,
    train_count: int | None = None,
) -> dict[str, list[AlignedPair]]:
    """Split warped measured pairs into train/test and add synthetic train pairs.

    The first ``train_count`` measured pairs (default 90%) go to training in
    input order, the remainder to test.
    """
    if not pairs:
        raise ValueError("need at least one measured pair")
    if train_count is None:
        train_count = default_train_count(len(pairs))
    if not 0 <= train_count <= len(pairs):
        raise ValueError(f"train_count {train_count} outside 0..{len(pairs)}")
    aligned = [AlignedPair(np.asarray(s, dtype=np.float64), warp_image(b, w), "measured") for s, b, w in pairs]
    train = aligned[:train_count] + [synth_pair(v, model) for v in naturals]
    return {"train": train, "test": aligned[train_count:]}


def iter_patches(
    pair: AlignedPair,
    count: int,
    patch: int = PATCH_SIZE,
    noise_sigma: float = NOISE_SIGMA,
    rng_seed: int = 0,
) -> Iterator[PatchPair]:
    """Lazily yield co-located random crops with Gaussian noise on the blurry side."""
    if pair.sharp.shape != pair.blurry.shape:
        raise ValueError("pair images must have the same shape")
    m, n = pair.sharp.shape
    if m < patch or n < patch:
        raise ValueError(f"image {pair.sharp.shape} smaller than patch size {patch}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rng = np.random.default_rng(rng_seed)
    for _ in range(count):
        r = int(rng.integers(0, m - patch + 1))
        c = int(rng.integers(0, n - patch + 1))
        sharp = pair.sharp[r : r + patch, c : c + patch].copy()
        blurry = pair.blurry[r : r + patch, c : c + patch].copy()
        if noise_sigma > 0:
            blurry += noise_sigma * rng.standard_normal((patch, patch))
        yield PatchPair(sharp, blurry, pair.source, (r, c))


def sample_patches(pair: AlignedPair, count: int, patch: int = PATCH_SIZE, noise_sigma: float = NOISE_SIGMA, rng_seed: int = 0) -> list[PatchPair]:
    return list(iter_patches(pair, count, patch, noise_sigma, rng_seed))


def patch_mse(dataset: Sequence[PatchPair], backend: Callable[[np.ndarray], np.ndarray]) -> float:
    """Summed squared error between sharp patches and deblurred blurry patches."""
    if not dataset:
        raise ValueError("empty patch set")
    total = 0.0
    for pp in dataset:
        d = pp.sharp_patch - backend(pp.blurry_patch)
        total += float(np.sum(d * d))
    return total
