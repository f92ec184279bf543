"""Polynomial coordinate warps and their estimation.

A warp of degree ``d`` maps a pixel ``(i, j)`` to ``(i', j') = W f(i, j)`` where
``f`` lists the monomials of total degree <= d in graded order
(1; i, j; i^2, ij, j^2; ...). Both input and output coordinates live in the
normalised square [-1, 1]^2, so identity rows are ``[0, 1, 0, ...]`` and
``[0, 0, 1, ...]`` regardless of image size.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .image import bicubic_sample, center
from .optim import LbfgsConfig, OptimProblem, OptimReport, lbfgs_minimize


def n_features(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def _exponents(degree: int) -> list[tuple[int, int]]:
    return [(t - b, b) for t in range(degree + 1) for b in range(t + 1)]


def poly_features(i, j, degree: int = 3) -> np.ndarray:
    """Monomials of ``(i, j)`` up to total ``degree``.

    Scalars give a vector of length K; arrays give shape ``(..., K)``.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    i = np.asarray(i, dtype=np.float64)
    j = np.asarray(j, dtype=np.float64)
    return np.stack([i**a * j**b for a, b in _exponents(degree)], axis=-1)


def normalize_coords(i, j, shape: tuple[int, int]):
    m, n = shape
    return 2.0 * np.asarray(i) / (m - 1) - 1.0, 2.0 * np.asarray(j) / (n - 1) - 1.0


def denormalize_coords(i_n, j_n, shape: tuple[int, int]):
    m, n = shape
    return (np.asarray(i_n) + 1.0) * (m - 1) / 2.0, (np.asarray(j_n) + 1.0) * (n - 1) / 2.0


@dataclass(frozen=True)
class WarpMatrix:
    coeffs: np.ndarray
    degree: int = 3

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64)
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if c.shape != (2, n_features(self.degree)):
            raise ValueError(
                f"degree-{self.degree} warp needs a 2x{n_features(self.degree)} matrix, got {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("warp coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def identity(cls, degree: int = 3) -> "WarpMatrix":
        c = np.zeros((2, n_features(degree)))
        c[0, 1] = 1.0
        c[1, 2] = 1.0
        return cls(c, degree)

    @classmethod
    def from_flat(cls, params, degree: int) -> "WarpMatrix":
        return cls(np.reshape(params, (2, n_features(degree))), degree)

    def flat(self) -> np.ndarray:
        return self.coeffs.ravel().copy()

    def with_degree(self, degree: int) -> "WarpMatrix":
        """Same transform expressed with a higher-degree basis (zero padding)."""
        if degree < self.degree:
            raise ValueError("cannot lower the degree of a warp without changing it")
        c = np.zeros((2, n_features(degree)))
        c[:, : self.coeffs.shape[1]] = self.coeffs
        return WarpMatrix(c, degree)

    def map_normalized(self, i_n, j_n) -> tuple[np.ndarray, np.ndarray]:
        f = poly_features(i_n, j_n, self.degree)
        return f @ self.coeffs[0], f @ self.coeffs[1]

    def map_pixels(self, i, j, shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        """Source pixel coordinates sampled for output pixel(s) ``(i, j)``."""
        i_n, j_n = normalize_coords(i, j, shape)
        return denormalize_coords(*self.map_normalized(i_n, j_n), shape)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"degree {self.degree}\n")
            for row in self.coeffs:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "WarpMatrix":
        with open(path, encoding="ascii") as fh:
            lines = [ln.split() for ln in fh.read().splitlines() if ln.strip()]
        if len(lines) != 3 or len(lines[0]) != 2 or lines[0][0] != "degree":
            raise ValueError(f"{path}: expected 'degree d' followed by two coefficient rows")
        try:
            degree = int(lines[0][1])
            rows = [[float(t) for t in ln] for ln in lines[1:]]
        except ValueError as exc:
            raise ValueError(f"{path}: malformed warp file") from exc
        return cls(np.array(rows), degree)


class _WarpSampler:
    """Evaluates ``Psi(img, W)`` and its Jacobian on a fixed pixel grid."""

    def __init__(self, img: np.ndarray, degree: int, rows: np.ndarray, cols: np.ndarray):
        self.img = np.asarray(img, dtype=np.float64)
        if self.img.shape[0] < 4 or self.img.shape[1] < 4:
            raise ValueError("warping needs images of at least 4x4 pixels")
        self.degree = degree
        shape = self.img.shape
        ii, jj = np.meshgrid(rows, cols, indexing="ij")
        self.out_shape = ii.shape
        i_n, j_n = normalize_coords(ii.ravel(), jj.ravel(), shape)
        self.features = poly_features(i_n, j_n, degree)
        self.scale = ((shape[0] - 1) / 2.0, (shape[1] - 1) / 2.0)

    def coords(self, w: WarpMatrix):
        yn = self.features @ w.coeffs[0]
        xn = self.features @ w.coeffs[1]
        return (yn + 1.0) * self.scale[0], (xn + 1.0) * self.scale[1]

    def values(self, w: WarpMatrix) -> np.ndarray:
        ys, xs = self.coords(w)
        return bicubic_sample(self.img, ys, xs).reshape(self.out_shape)

    def values_and_vjp(self, w: WarpMatrix):
        """Warped values and a function mapping dL/dvalues to dL/dcoeffs (flat)."""
        ys, xs = self.coords(w)
        v, dy, dx = bicubic_sample(self.img, ys, xs, derivatives=True)

        def vjp(gv: np.ndarray) -> np.ndarray:
            gv = np.asarray(gv).ravel()
            g0 = self.features.T @ (gv * dy * self.scale[0])
            g1 = self.features.T @ (gv * dx * self.scale[1])
            return np.concatenate([g0, g1])

        return v.reshape(self.out_shape), vjp


def full_sampler(img: np.ndarray, degree: int) -> _WarpSampler:
    m, n = np.shape(img)
    return _WarpSampler(img, degree, np.arange(m), np.arange(n))


def warp_image(img: np.ndarray, w: WarpMatrix) -> np.ndarray:
    """Resample ``img`` at the warped coordinates of every output pixel."""
    return full_sampler(img, w.degree).values(w)


def _check_pair(blurry: np.ndarray, sharp: np.ndarray) -> None:
    if np.shape(blurry) != np.shape(sharp):
        raise ValueError(f"image shapes differ: {np.shape(blurry)} vs {np.shape(sharp)}")
    if min(np.shape(sharp)) < 4:
        raise ValueError("warp estimation needs images of at least 4x4 pixels")


def _warping_objective(blurry: np.ndarray, sharp: np.ndarray, degree: int):
    _check_pair(blurry, sharp)
    sampler = full_sampler(blurry, degree)
    target = center(sharp)
    npix = target.size

    def fun(params: np.ndarray):
        w = WarpMatrix.from_flat(params, degree)
        warped, vjp = sampler.values_and_vjp(w)
        r = center(warped) - target
        loss = float(np.sum(r * r)) / npix
        # r already has zero mean, so centering passes the gradient through unchanged
        return loss, vjp(2.0 * r / npix)

    return OptimProblem(2 * n_features(degree), fun)


def warping_loss(w: WarpMatrix, blurry: np.ndarray, sharp: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared difference of the centred warped blurry and centred sharp images.

    Returns the loss and its gradient with respect to the flattened coefficients.
    """
    return _warping_objective(blurry, sharp, w.degree)(w.flat())


def fit_warp(
    blurry: np.ndarray,
    sharp: np.ndarray,
    degree: int = 3,
    init: WarpMatrix | None = None,
    config: LbfgsConfig | None = None,
) -> tuple[WarpMatrix, OptimReport]:
    """Estimate the warp aligning ``blurry`` onto ``sharp``.

    ``init`` may be of lower degree; it is lifted to ``degree`` first.
    """
    if init is None:
        init = WarpMatrix.identity(degree)
    elif init.degree != degree:
        init = init.with_degree(degree)
    problem = _warping_objective(blurry, sharp, degree)
    report = lbfgs_minimize(problem, init.flat(), config)
    return WarpMatrix.from_flat(report.final_params, degree), report


def degree_sweep(
    blurry: np.ndarray,
    sharp: np.ndarray,
    degrees=range(1, 6),
    config: LbfgsConfig | None = None,
) -> list[tuple[int, float, WarpMatrix]]:
    """Fit increasing degrees, warm-starting each from the previous solution.

    Because every lower-degree warp is representable at higher degree, the
    final losses are non-increasing in the degree.
    """
    results = []
    prev = None
    for d in sorted(degrees):
        w, rep = fit_warp(blurry, sharp, d, prev, config)
        results.append((d, rep.final_loss, w))
        prev = w
    return results


def grid_mapping_error(
    estimated: WarpMatrix,
    reference: WarpMatrix,
    shape: tuple[int, int],
    grid: int = 10,
    margin: float = 0.1,
) -> tuple[float, float]:
    """Mean and max pixel distance between two warps on an interior grid.

    The grid spans the central ``1 - 2*margin`` fraction of each axis.
    """
    m, n = shape
    rows = np.linspace(margin * (m - 1), (1 - margin) * (m - 1), grid)
    cols = np.linspace(margin * (n - 1), (1 - margin) * (n - 1), grid)
    ii, jj = np.meshgrid(rows, cols, indexing="ij")
    ya, xa = estimated.map_pixels(ii, jj, shape)
    yb, xb = reference.map_pixels(ii, jj, shape)
    dist = np.hypot(ya - yb, xa - xb)
    return float(dist.mean()), float(dist.max())
