"""Direct and FFT-based 2-D convolution.

Indexing convention for ``valid`` mode with a ``kh`` x ``kw`` kernel::

    out[i, j] = sum_{u, v} k[u, v] * img[i + kh - 1 - u, j + kw - 1 - v]

so the output is ``(m - kh + 1) x (n - kw + 1)``. ``same`` mode zero-pads the
image by half the (odd) kernel size and keeps the input shape.
"""

from __future__ import annotations

import os

import numpy as np

from . import fft as _fft

MODES = ("valid", "same")


def flip(k: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(k, dtype=np.float64)[::-1, ::-1])


def as_kernel(data) -> np.ndarray:
    """Validate a square, odd-sized, finite PSF kernel."""
    k = np.array(data, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"kernel must be square, got shape {k.shape}")
    if k.shape[0] % 2 == 0:
        raise ValueError(f"kernel size must be odd, got {k.shape[0]}")
    if not np.all(np.isfinite(k)):
        raise ValueError("kernel contains non-finite values")
    return k


def _check(img: np.ndarray, k: np.ndarray, mode: str) -> tuple[np.ndarray, np.ndarray]:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    img = np.asarray(img, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if img.ndim != 2 or k.ndim != 2:
        raise ValueError("image and kernel must be 2-D")
    if mode == "valid" and (k.shape[0] > img.shape[0] or k.shape[1] > img.shape[1]):
        raise ValueError(f"kernel {k.shape} larger than image {img.shape} in valid mode")
    if mode == "same" and (k.shape[0] % 2 == 0 or k.shape[1] % 2 == 0):
        raise ValueError("same mode needs an odd-sized kernel")
    return img, k


def _zero_pad_same(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    hy, hx = k.shape[0] // 2, k.shape[1] // 2
    return np.pad(img, ((hy, hy), (hx, hx)))


def conv_naive(img: np.ndarray, k: np.ndarray, mode: str = "valid") -> np.ndarray:
    """Direct O(m n p^2) convolution: one shifted multiply-add per kernel tap."""
    img, k = _check(img, k, mode)
    if mode == "same":
        img = _zero_pad_same(img, k)
    kh, kw = k.shape
    oh, ow = img.shape[0] - kh + 1, img.shape[1] - kw + 1
    out = np.zeros((oh, ow))
    for u in range(kh):
        for v in range(kw):
            r = kh - 1 - u
            c = kw - 1 - v
            out += k[u, v] * img[r : r + oh, c : c + ow]
    return out


def correlate_naive(img: np.ndarray, k: np.ndarray, mode: str = "valid") -> np.ndarray:
    return conv_naive(img, flip(k), mode)


def fft_shape(img_shape: tuple[int, int], k_shape: tuple[int, int]) -> tuple[int, int]:
    """Power-of-two transform size holding the full linear convolution."""
    return (
        _fft.next_pow2(img_shape[0] + k_shape[0] - 1),
        _fft.next_pow2(img_shape[1] + k_shape[1] - 1),
    )


def _full_fft(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    shape = fft_shape(img.shape, k.shape)
    spec = _fft.rfft2(img, shape) * _fft.rfft2(k, shape)
    full = _fft.irfft2(spec, shape)
    return full[: img.shape[0] + k.shape[0] - 1, : img.shape[1] + k.shape[1] - 1]


def conv_fft(img: np.ndarray, k: np.ndarray, mode: str = "valid") -> np.ndarray:
    """Convolution via the in-package radix-2 real FFT."""
    img, k = _check(img, k, mode)
    full = _full_fft(img, k)
    kh, kw = k.shape
    m, n = img.shape
    if mode == "valid":
        return np.ascontiguousarray(full[kh - 1 : m, kw - 1 : n])
    hy, hx = kh // 2, kw // 2
    return np.ascontiguousarray(full[hy : hy + m, hx : hx + n])


def correlate_fft(img: np.ndarray, k: np.ndarray, mode: str = "valid") -> np.ndarray:
    """Cross-correlation (unflipped kernel); the adjoint partner of :func:`conv_fft`."""
    return conv_fft(img, flip(k), mode)


class FixedImageConvolver:
    """Valid-mode convolutions against one image with its spectrum cached.

    Used inside optimisation loops where the image stays fixed and only the
    kernel changes. ``conv`` maps a p x p kernel to the valid output;
    ``correlate_with`` maps an output-sized array back to a p x p array and is
    the adjoint of ``conv``.
    """

    def __init__(self, img: np.ndarray, ksize: int):
        self.img = np.asarray(img, dtype=np.float64)
        m, n = self.img.shape
        if ksize > min(m, n):
            raise ValueError(f"kernel size {ksize} larger than image {self.img.shape}")
        self.ksize = ksize
        self.out_shape = (m - ksize + 1, n - ksize + 1)
        # m + p - 1 per axis also suffices for the adjoint: only a p x p window
        # of the circular correlation is read, and it is free of wrap-around
        self.shape = fft_shape((m, n), (ksize, ksize))
        self._spec = _fft.rfft2(self.img, self.shape)

    def conv(self, k: np.ndarray) -> np.ndarray:
        p = self.ksize
        full = _fft.irfft2(self._spec * _fft.rfft2(k, self.shape), self.shape)
        m, n = self.img.shape
        return full[p - 1 : m, p - 1 : n]

    def correlate_with(self, r: np.ndarray) -> np.ndarray:
        # g[u, v] = sum_ij r[i, j] * img[i + p-1-u, j + p-1-v]
        p = self.ksize
        oh, ow = self.out_shape
        full = _fft.irfft2(self._spec * _fft.rfft2(flip(r), self.shape), self.shape)
        corr = full[oh - 1 : oh - 1 + p, ow - 1 : ow - 1 + p]
        return flip(corr)


# ---------------------------------------------------------------- kernel files


def save_kernel(k: np.ndarray, path: str | os.PathLike) -> None:
    k = as_kernel(k)
    with open(path, "w", encoding="ascii") as fh:
        write_kernel_lines(k, fh)


def write_kernel_lines(k: np.ndarray, fh) -> None:
    fh.write(f"{k.shape[0]}\n")
    for row in k:
        fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def parse_kernel_lines(lines: list[str], source: str = "<kernel>") -> tuple[np.ndarray, int]:
    """Parse a kernel block from ``lines``; returns the kernel and lines consumed."""
    try:
        p = int(lines[0].strip())
    except (IndexError, ValueError) as exc:
        raise ValueError(f"{source}: first line must be the kernel size") from exc
    if p < 1 or len(lines) < p + 1:
        raise ValueError(f"{source}: expected {p} kernel rows")
    try:
        rows = [[float(t) for t in lines[1 + i].split()] for i in range(p)]
    except ValueError as exc:
        raise ValueError(f"{source}: non-numeric kernel entry") from exc
    if any(len(r) != p for r in rows):
        raise ValueError(f"{source}: every kernel row must hold {p} values")
    return as_kernel(rows), p + 1


def load_kernel(path: str | os.PathLike) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    return parse_kernel_lines(lines, str(path))[0]
