"""Grayscale raster helpers.

Images are plain 2-D float64 numpy arrays indexed ``[row, col]``. Values are
nominally in [0, 1]; intermediate results may leave that range and are only
clipped when written to disk.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageIOError(ValueError):
    """Raised when an image file cannot be read or written."""


def as_image(data, *, min_size: int = 1) -> np.ndarray:
    """Validate ``data`` as a finite 2-D raster and return a float64 copy."""
    img = np.array(data, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if img.shape[0] < min_size or img.shape[1] < min_size:
        raise ValueError(f"image {img.shape} smaller than {min_size}x{min_size}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


def center(img: np.ndarray) -> np.ndarray:
    """Subtract the mean intensity."""
    img = np.asarray(img, dtype=np.float64)
    out = img - img.mean()
    # second pass removes the rounding residue of the first mean
    return out - out.mean()


def frobenius_norm(img: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(img, dtype=np.float64))))


def crop(img: np.ndarray, top: int, left: int, h: int, w: int) -> np.ndarray:
    """Copy of the ``h`` x ``w`` rectangle whose top-left corner is (top, left)."""
    m, n = img.shape
    if h < 1 or w < 1 or top < 0 or left < 0 or top + h > m or left + w > n:
        raise ValueError(
            f"crop rectangle (top={top}, left={left}, h={h}, w={w}) "
            f"outside image of shape {img.shape}"
        )
    return np.array(img[top : top + h, left : left + w], dtype=np.float64)


def reflect_pad(img: np.ndarray, top: int, bottom: int, left: int, right: int) -> np.ndarray:
    """Mirror-pad without repeating the edge pixel: ``[a, b, c]`` -> ``[c, b, a, b, c]``."""
    m, n = img.shape
    for amount, dim in ((top, m), (bottom, m), (left, n), (right, n)):
        if amount < 0:
            raise ValueError("pad amounts must be nonnegative")
        if amount and amount >= dim:
            raise ValueError(f"pad exceeds image: {amount} >= {dim}")
    return np.pad(np.asarray(img, dtype=np.float64), ((top, bottom), (left, right)), mode="reflect")


def mirror_pad(img: np.ndarray, top: int, bottom: int, left: int, right: int) -> np.ndarray:
    """Like :func:`reflect_pad` but allows pads longer than the image.

    Long pads keep reflecting back and forth; a single-pixel axis is
    edge-replicated since it has nothing to mirror.
    """
    img = np.asarray(img, dtype=np.float64)
    m, n = img.shape
    if max(top, bottom) < m and max(left, right) < n:
        return reflect_pad(img, top, bottom, left, right)
    out = img
    if top or bottom:
        out = np.pad(out, ((top, bottom), (0, 0)), mode="reflect" if m > 1 else "edge")
    if left or right:
        out = np.pad(out, ((0, 0), (left, right)), mode="reflect" if n > 1 else "edge")
    return out


# Catmull-Rom weights (a = -0.5) for taps at offsets -1, 0, 1, 2 and their
# derivatives with respect to the fractional position t.
def _cubic_weights(t: np.ndarray) -> tuple[np.ndarray, ...]:
    t2 = t * t
    t3 = t2 * t
    return (
        0.5 * (-t3 + 2 * t2 - t),
        0.5 * (3 * t3 - 5 * t2 + 2),
        0.5 * (-3 * t3 + 4 * t2 + t),
        0.5 * (t3 - t2),
    )


def _cubic_weight_derivs(t: np.ndarray) -> tuple[np.ndarray, ...]:
    t2 = t * t
    return (
        0.5 * (-3 * t2 + 4 * t - 1),
        0.5 * (9 * t2 - 10 * t),
        0.5 * (-9 * t2 + 8 * t + 1),
        0.5 * (3 * t2 - 2 * t),
    )


def _axis_taps(coord: np.ndarray, size: int):
    inside = (coord >= 0) & (coord <= size - 1)
    c = np.clip(coord, 0.0, size - 1.0)
    base = np.minimum(np.floor(c), size - 2).astype(np.intp)
    t = c - base
    idx = [np.clip(base + off, 0, size - 1) for off in (-1, 0, 1, 2)]
    return idx, t, inside


def bicubic_sample(img: np.ndarray, ys, xs, *, derivatives: bool = False):
    """Catmull-Rom interpolation of ``img`` at arrays of coordinates.

    Coordinates are clamped to ``[0, m-1] x [0, n-1]``; taps beyond the border
    replicate the edge pixel. With ``derivatives=True`` also returns the partial
    derivatives with respect to ``ys`` and ``xs``, which are zero wherever the
    coordinate was clamped.
    """
    img = np.asarray(img, dtype=np.float64)
    m, n = img.shape
    if m < 4 or n < 4:
        raise ValueError(f"bicubic sampling needs at least 4x4 pixels, got {img.shape}")
    ys = np.asarray(ys, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ri, ty, in_y = _axis_taps(ys, m)
    ci, tx, in_x = _axis_taps(xs, n)
    wy = _cubic_weights(ty)
    wx = _cubic_weights(tx)

    # rows[a] = horizontally interpolated value on tap row a
    rows = []
    for a in range(4):
        acc = np.zeros(np.broadcast(ys, xs).shape)
        for b in range(4):
            acc = acc + wx[b] * img[ri[a], ci[b]]
        rows.append(acc)
    value = sum(wy[a] * rows[a] for a in range(4))
    if not derivatives:
        return value

    dwy = _cubic_weight_derivs(ty)
    dwx = _cubic_weight_derivs(tx)
    dy = sum(dwy[a] * rows[a] for a in range(4))
    dx = np.zeros_like(value)
    for a in range(4):
        for b in range(4):
            dx = dx + wy[a] * dwx[b] * img[ri[a], ci[b]]
    return value, np.where(in_y, dy, 0.0), np.where(in_x, dx, 0.0)


def sample_bicubic(img: np.ndarray, y: float, x: float) -> float:
    """Scalar convenience wrapper around :func:`bicubic_sample`."""
    return float(bicubic_sample(img, np.float64(y), np.float64(x)))


# ---------------------------------------------------------------- file I/O


def _read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageIOError(f"{path}: truncated PGM header")
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace byte after maxval
    if tokens[0] != b"P5":
        raise ImageIOError(f"{path}: only binary PGM (P5) is supported")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageIOError(f"{path}: malformed PGM header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageIOError(f"{path}: invalid PGM dimensions or maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    body = raw[pos : pos + need]
    if len(body) < need:
        raise ImageIOError(f"{path}: truncated PGM data ({len(body)} of {need} bytes)")
    data = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return data.astype(np.float64) / maxval


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Read a grayscale PNG or binary PGM into a float image in [0, 1].

    RGB(A) PNGs are converted with the Rec. 601 luma weights.
    """
    path = Path(path)
    if not path.is_file():
        raise ImageIOError(f"{path}: no such file")
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        return _read_pgm(path)
    try:
        with PILImage.open(path) as pil:
            pil.load()
            mode = pil.mode
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(pil, dtype=np.float64)
                return arr / 65535.0
            if mode in ("L", "P", "1", "LA"):
                return np.asarray(pil.convert("L"), dtype=np.float64) / 255.0
            rgb = np.asarray(pil.convert("RGB"), dtype=np.float64) / 255.0
    except ImageIOError:
        raise
    except Exception as exc:  # Pillow raises a zoo of exception types
        raise ImageIOError(f"{path}: cannot read image ({exc})") from exc
    return rgb @ np.asarray(LUMA_WEIGHTS)


def save_image(img: np.ndarray, path: str | os.PathLike, bits: int = 8) -> None:
    """Write ``img`` clipped to [0, 1] as 8- or 16-bit PNG or PGM (by suffix)."""
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    path = Path(path)
    img = as_image(img)
    maxval = 255 if bits == 8 else 65535
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval)
    suffix = path.suffix.lower()
    if suffix in (".pgm", ".pnm"):
        dtype = ">u2" if bits == 16 else "u1"
        header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
        path.write_bytes(header + q.astype(dtype).tobytes())
    elif suffix == ".png":
        if bits == 8:
            PILImage.fromarray(q.astype(np.uint8)).save(path)
        else:
            PILImage.fromarray(q.astype(np.uint16)).save(path)
    else:
        raise ImageIOError(f"{path}: unsupported output format {suffix!r}")
