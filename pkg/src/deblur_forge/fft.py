"""Iterative radix-2 Cooley-Tukey transforms.

All lengths must be powers of two. Transforms act along the last axis and
are vectorised over the leading axes, so a 2-D transform is two 1-D passes.
The real transforms pack a length-N real signal into a length-N/2 complex
one and untangle the halves afterwards.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def next_pow2(n: int) -> int:
    """Smallest power of two >= n (and >= 1)."""
    if n <= 1:
        return 1
    return 1 << (int(n) - 1).bit_length()


def _check_pow2(n: int) -> None:
    if n < 1 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")


@lru_cache(maxsize=64)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=256)
def _twiddles(length: int, sign: int) -> np.ndarray:
    k = np.arange(length // 2)
    return np.exp(sign * 2j * np.pi * k / length)


def _transform(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-1]
    _check_pow2(n)
    lead = x.shape[:-1]
    a = np.asarray(x, dtype=np.complex128)[..., _bit_reverse(n)]
    length = 2
    while length <= n:
        half = length // 2
        blocks = a.reshape(lead + (n // length, length))
        odd = blocks[..., half:] * _twiddles(length, sign)
        blocks[..., half:] = blocks[..., :half]
        blocks[..., half:] -= odd
        blocks[..., :half] += odd
        length *= 2
    return a


def fft(x: np.ndarray) -> np.ndarray:
    """Forward complex DFT along the last axis."""
    return _transform(x, -1)


def ifft(x: np.ndarray) -> np.ndarray:
    """Inverse complex DFT along the last axis (normalised by 1/N)."""
    x = np.asarray(x)
    return _transform(x, +1) / x.shape[-1]


def rfft(x: np.ndarray) -> np.ndarray:
    """Real-input DFT along the last axis; returns the N/2 + 1 nonnegative bins."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    _check_pow2(n)
    if n == 1:
        return x.astype(np.complex128)
    h = n // 2
    z = fft(x[..., 0::2] + 1j * x[..., 1::2])
    k = np.arange(h + 1)
    zk = z[..., k % h]
    zc = np.conj(z[..., (h - k) % h])
    even = 0.5 * (zk + zc)
    odd = -0.5j * (zk - zc)
    return even + np.exp(-2j * np.pi * k / n) * odd


def irfft(spec: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`rfft` for an output length ``n``."""
    _check_pow2(n)
    spec = np.asarray(spec, dtype=np.complex128)
    if spec.shape[-1] != n // 2 + 1:
        raise ValueError(f"spectrum has {spec.shape[-1]} bins, expected {n // 2 + 1}")
    if n == 1:
        return spec.real.copy()
    h = n // 2
    k = np.arange(h)
    xk = spec[..., k]
    xc = np.conj(spec[..., h - k])
    even = 0.5 * (xk + xc)
    odd = 0.5 * (xk - xc) * np.exp(2j * np.pi * k / n)
    z = ifft(even + 1j * odd)
    out = np.empty(spec.shape[:-1] + (n,))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def rfft2(x: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Zero-pad a 2-D real array to ``shape`` and transform both axes."""
    rows, cols = shape
    _check_pow2(rows)
    _check_pow2(cols)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] > rows or x.shape[1] > cols:
        raise ValueError(f"array {x.shape} does not fit transform shape {shape}")
    padded = np.zeros((rows, cols))
    padded[: x.shape[0], : x.shape[1]] = x
    spec = rfft(padded)
    return fft(np.ascontiguousarray(spec.T)).T


def irfft2(spec: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`rfft2`, returning a real array of ``shape``."""
    rows, cols = shape
    half = ifft(np.ascontiguousarray(np.asarray(spec).T))
    return irfft(np.ascontiguousarray(half[:, :rows].T), cols)
