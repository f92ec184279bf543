"""Classical non-blind deconvolution backends.

Every backend maps an image to an image of the same shape. Both deconvolvers
subtract the brightness offset, embed the input in a mirror-padded,
edge-tapered power-of-two domain, work with circular convolution there and
crop the result back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import fft as _fft
from ..image import mirror_pad
from ..psf import PsfModel

BACKEND_KINDS = ("identity", "wiener", "richardson_lucy")


def _gap_window(size: int, lo: int, hi: int) -> np.ndarray:
    """1 on ``[lo, hi)``; across the circular gap outside it, a raised cosine dipping to 0."""
    w = np.ones(size)
    gap = size - (hi - lo)
    if gap:
        t = np.arange(gap)
        dip = 0.5 + 0.5 * np.cos(2.0 * np.pi * (t + 0.5) / gap)
        w[(hi + t) % size] = dip
    return w


def _padded_domain(img: np.ndarray, p: int):
    """Embed ``img`` in a power-of-two periodic domain.

    A ``p``-pixel mirror margin surrounds the image; beyond it the mirrored
    content fades to the image mean so the circular wrap is seamless.
    """
    m, n = img.shape
    margin = p + max(p, 8)
    rows = _fft.next_pow2(m + 2 * margin)
    cols = _fft.next_pow2(n + 2 * margin)
    top = (rows - m) // 2
    left = (cols - n) // 2
    padded = mirror_pad(img, top, rows - m - top, left, cols - n - left)
    window = np.outer(_gap_window(rows, top - p, top + m + p), _gap_window(cols, left - p, left + n + p))
    mu = float(img.mean())
    return mu + (padded - mu) * window, (top, left)


def _kernel_spectrum(kernel: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Spectrum of ``kernel`` wrapped so its centre sits at the origin."""
    p = kernel.shape[0]
    h = p // 2
    rows, cols = shape
    if p > rows or p > cols:
        raise ValueError("kernel larger than transform domain")
    wrapped = np.zeros(shape)
    idx_r = (np.arange(p) - h) % rows
    idx_c = (np.arange(p) - h) % cols
    wrapped[np.ix_(idx_r, idx_c)] = kernel
    return _fft.rfft2(wrapped, shape)


def wiener_deblur(img: np.ndarray, psf: PsfModel, epsilon: float) -> np.ndarray:
    """Inverse filter ``conj(K) Y / max(|K|^2, epsilon)`` after removing ``tau``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    img = np.asarray(img, dtype=np.float64)
    m, n = img.shape
    padded, (top, left) = _padded_domain(img - psf.tau, psf.size)
    shape = padded.shape
    k_spec = _kernel_spectrum(psf.kernel, shape)
    power = np.maximum(np.abs(k_spec) ** 2, epsilon)
    est = _fft.irfft2(_fft.rfft2(padded, shape) * np.conj(k_spec) / power, shape)
    return est[top : top + m, left : left + n]


def rl_deblur(img: np.ndarray, psf: PsfModel, iters: int) -> np.ndarray:
    """Richardson-Lucy iterations with the kernel clipped to >= 0 and renormalised."""
    if iters < 1:
        raise ValueError("iterations must be >= 1")
    k = np.maximum(psf.kernel, 0.0)
    if k.sum() <= 0:
        raise ValueError("kernel has no positive mass")
    k = k / k.sum()
    img = np.asarray(img, dtype=np.float64)
    m, n = img.shape
    observed = np.maximum(img - psf.tau, 0.0)
    padded, (top, left) = _padded_domain(observed, psf.size)
    shape = padded.shape
    k_spec = _kernel_spectrum(k, shape)
    k_adj = np.conj(k_spec)
    tiny = 1e-12
    est = np.full(shape, max(float(padded.mean()), tiny))
    for _ in range(iters):
        blurred = _fft.irfft2(_fft.rfft2(est, shape) * k_spec, shape)
        ratio = padded / np.maximum(blurred, tiny)
        est = est * _fft.irfft2(_fft.rfft2(ratio, shape) * k_adj, shape)
        # FFT round-off can leave tiny negatives where the data are zero
        est = np.maximum(est, 0.0)
    return est[top : top + m, left : left + n]


@dataclass(frozen=True)
class DeblurBackend:
    """A shape-preserving deblurring map used per tile."""

    kind: str = "identity"
    psf: PsfModel | None = None
    epsilon: float = 1e-4
    iterations: int = 30

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ValueError(f"backend must be one of {BACKEND_KINDS}, got {self.kind!r}")
        if self.kind != "identity" and self.psf is None:
            raise ValueError(f"{self.kind} backend needs a PSF")
        if self.kind == "wiener" and not self.epsilon > 0:
            raise ValueError("wiener epsilon must be > 0")
        if self.kind == "richardson_lucy" and self.iterations < 1:
            raise ValueError("richardson_lucy needs at least one iteration")

    def __call__(self, tile: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return np.array(tile, dtype=np.float64)
        if self.kind == "wiener":
            return wiener_deblur(tile, self.psf, self.epsilon)
        return rl_deblur(tile, self.psf, self.iterations)
