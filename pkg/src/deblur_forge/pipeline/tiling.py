"""Tiled processing with crop or blend reassembly.

A layout splits the image into ``core`` x ``core`` cells. Each processing tile
adds ``overlap`` pixels of context on every side, so tiles are
``core + 2*overlap`` wide and neighbouring tiles share ``2*overlap`` pixels.
The image is mirror-padded by ``overlap`` on the top/left and up to the next
full cell plus ``overlap`` on the bottom/right.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..image import mirror_pad

REASSEMBLY_MODES = ("none", "crop", "blend")
DEFAULT_CORE = 640
DEFAULT_OVERLAP = 160


@dataclass(frozen=True)
class TileLayout:
    height: int
    width: int
    core: int
    overlap: int
    padded_h: int
    padded_w: int
    origins: tuple[tuple[int, int], ...]

    @property
    def extent(self) -> int:
        return self.core + 2 * self.overlap

    @property
    def grid(self) -> tuple[int, int]:
        return math.ceil(self.height / self.core), math.ceil(self.width / self.core)


def plan_tiles(h: int, w: int, core: int = DEFAULT_CORE, overlap: int = DEFAULT_OVERLAP) -> TileLayout:
    if h < 1 or w < 1:
        raise ValueError(f"image size must be positive, got {h}x{w}")
    if core < 1:
        raise ValueError("core must be >= 1")
    if not 0 <= overlap < core:
        raise ValueError(f"overlap must satisfy 0 <= overlap < core, got {overlap} (core {core})")
    rows, cols = math.ceil(h / core), math.ceil(w / core)
    origins = tuple((r * core, c * core) for r in range(rows) for c in range(cols))
    return TileLayout(h, w, core, overlap, rows * core + 2 * overlap, cols * core + 2 * overlap, origins)


def tile_weights(core: int, overlap: int) -> np.ndarray:
    """One-axis blend profile over a tile of ``core + 2*overlap`` pixels.

    Raised-cosine ramps across each overlap margin, 1 across the core.
    """
    extent = core + 2 * overlap
    phi = np.ones(extent)
    if overlap:
        u = np.arange(overlap)
        ramp = 0.5 - 0.5 * np.cos(np.pi * (u + 0.5) / overlap)
        phi[:overlap] = ramp
        phi[extent - overlap :] = ramp[::-1]
    return phi


def blend_denominator(layout: TileLayout) -> np.ndarray:
    """Sum of tile weights at every padded pixel."""
    phi = tile_weights(layout.core, layout.overlap)
    rows, cols = layout.grid
    e = layout.extent
    wy = np.zeros(layout.padded_h)
    wx = np.zeros(layout.padded_w)
    for r in range(rows):
        wy[r * layout.core : r * layout.core + e] += phi
    for c in range(cols):
        wx[c * layout.core : c * layout.core + e] += phi
    return np.outer(wy, wx)


def _pad_for_layout(img: np.ndarray, layout: TileLayout) -> np.ndarray:
    o = layout.overlap
    bottom = layout.padded_h - layout.height - o
    right = layout.padded_w - layout.width - o
    return mirror_pad(img, o, bottom, o, right)


def _run_tiles(fn: Callable[[np.ndarray], np.ndarray], tiles: list[np.ndarray], workers: int) -> list[np.ndarray]:
    if workers <= 1 or len(tiles) <= 1:
        return [fn(t) for t in tiles]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tiles))


def _checked(fn, shape):
    def run(tile):
        out = np.asarray(fn(tile), dtype=np.float64)
        if out.shape != shape:
            raise ValueError(f"backend returned shape {out.shape} for a tile of shape {shape}")
        return out

    return run


def deblur_tiled(
    img: np.ndarray,
    backend: Callable[[np.ndarray], np.ndarray],
    core: int = DEFAULT_CORE,
    overlap: int = DEFAULT_OVERLAP,
    reassembly: str = "blend",
    workers: int = 1,
) -> np.ndarray:
    """Apply ``backend`` tile by tile and reassemble an image of the input shape.

    ``none`` processes bare ``core`` cells with no shared context, ``crop``
    keeps the centre cell of each overlapping tile, and ``blend`` forms the
    per-pixel normalised weighted sum of all tiles covering a pixel.
    Accumulation always follows tile order, so results do not depend on
    ``workers``.
    """
    if reassembly not in REASSEMBLY_MODES:
        raise ValueError(f"reassembly must be one of {REASSEMBLY_MODES}, got {reassembly!r}")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    layout = plan_tiles(h, w, core, overlap)
    s, o = layout.core, layout.overlap

    if reassembly == "none":
        padded = mirror_pad(img, 0, layout.padded_h - 2 * o - h, 0, layout.padded_w - 2 * o - w)
        tiles = [padded[r : r + s, c : c + s] for r, c in layout.origins]
        outs = _run_tiles(_checked(backend, (s, s)), tiles, workers)
        out = np.empty(padded.shape)
        for (r, c), t in zip(layout.origins, outs):
            out[r : r + s, c : c + s] = t
        return out[:h, :w]

    padded = _pad_for_layout(img, layout)
    e = layout.extent
    tiles = [padded[r : r + e, c : c + e] for r, c in layout.origins]
    outs = _run_tiles(_checked(backend, (e, e)), tiles, workers)

    if reassembly == "crop":
        out = np.empty((layout.padded_h - 2 * o, layout.padded_w - 2 * o))
        for (r, c), t in zip(layout.origins, outs):
            out[r : r + s, c : c + s] = t[o : o + s, o : o + s]
        return out[:h, :w]

    phi = tile_weights(s, o)
    weight = np.outer(phi, phi)
    num = np.zeros(padded.shape)
    for (r, c), t in zip(layout.origins, outs):
        num[r : r + e, c : c + e] += weight * t
    den = blend_denominator(layout)
    return (num / den)[o : o + h, o : o + w]


def seam_discrepancy(out: np.ndarray, core: int, reference: np.ndarray | None = None) -> float:
    """Largest jump across any tile seam.

    The jump is measured on ``out - reference`` when a reference (for example
    the untiled result) is given, so image content does not count as a seam.
    """
    d = np.asarray(out, dtype=np.float64)
    if reference is not None:
        d = d - reference
    h, w = d.shape
    worst = 0.0
    for c in range(core, w, core):
        worst = max(worst, float(np.abs(d[:, c] - d[:, c - 1]).max()))
    for r in range(core, h, core):
        worst = max(worst, float(np.abs(d[r, :] - d[r - 1, :]).max()))
    return worst
