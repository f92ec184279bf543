"""Point spread function and brightness offset estimation.

The forward model is ``blurry ~ valid_conv(sharp, P) + tau``. Estimation
minimises the mean squared residual plus a smoothed L1 penalty on ``P``,
optionally alternating with refinement of the alignment warp.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .conv import FixedImageConvolver, as_kernel, parse_kernel_lines, write_kernel_lines
from .image import crop
from .optim import LbfgsConfig, OptimProblem, OptimReport, lbfgs_minimize
from .warp import WarpMatrix, _WarpSampler, n_features, warp_image

L1_SMOOTHING = 1e-8
DEFAULT_LAMBDA = 1e-3
REFINE_ROUNDS = 2


@dataclass(frozen=True)
class PsfModel:
    kernel: np.ndarray
    tau: float = 0.0
    lam: float = DEFAULT_LAMBDA

    def __post_init__(self):
        k = as_kernel(self.kernel)
        k.setflags(write=False)
        object.__setattr__(self, "kernel", k)
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if not np.isfinite(self.tau):
            raise ValueError("tau must be finite")

    @property
    def size(self) -> int:
        return self.kernel.shape[0]

    def params(self) -> np.ndarray:
        return np.append(self.kernel.ravel(), self.tau)

    @classmethod
    def from_params(cls, params, p: int, lam: float) -> "PsfModel":
        params = np.asarray(params, dtype=np.float64)
        return cls(params[:-1].reshape(p, p), float(params[-1]), lam)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="ascii") as fh:
            write_kernel_lines(self.kernel, fh)
            fh.write(f"tau {self.tau:.17g}\n")
            fh.write(f"lambda {self.lam:.17g}\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PsfModel":
        with open(path, encoding="ascii") as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        kernel, used = parse_kernel_lines(lines, str(path))
        extra = {}
        for ln in lines[used:]:
            parts = ln.split()
            if len(parts) != 2 or parts[0] not in ("tau", "lambda"):
                raise ValueError(f"{path}: unexpected line {ln!r}")
            extra[parts[0]] = float(parts[1])
        return cls(kernel, extra.get("tau", 0.0), extra.get("lambda", DEFAULT_LAMBDA))


def valid_shape(sharp_shape: tuple[int, int], p: int) -> tuple[int, int]:
    return sharp_shape[0] - p + 1, sharp_shape[1] - p + 1


def crop_to_valid(img: np.ndarray, p: int) -> np.ndarray:
    """Central region matching the footprint of a valid convolution with a p x p kernel."""
    h = p // 2
    oh, ow = valid_shape(np.shape(img), p)
    return crop(img, h, h, oh, ow)


def _l1_smooth(k: np.ndarray) -> tuple[float, np.ndarray]:
    root = np.sqrt(k * k + L1_SMOOTHING**2)
    # shifted so that a zero kernel costs exactly zero
    return float(np.sum(root - L1_SMOOTHING)), k / root


class _PsfObjective:
    """Loss over the flat parameter vector ``[P.ravel(), tau]``."""

    def __init__(self, sharp: np.ndarray, target: np.ndarray, p: int, lam: float):
        if p < 1 or p % 2 == 0:
            raise ValueError("PSF size must be odd and positive")
        if p > min(np.shape(sharp)):
            raise ValueError(f"PSF size {p} exceeds sharp image {np.shape(sharp)}")
        expected = valid_shape(np.shape(sharp), p)
        if np.shape(target) != expected:
            raise ValueError(
                f"blurry target has shape {np.shape(target)}; expected the valid-convolution "
                f"size {expected} for a {p}x{p} kernel"
            )
        self.conv = FixedImageConvolver(sharp, p)
        self.target = np.asarray(target, dtype=np.float64)
        self.p = p
        self.lam = lam
        self.npix = self.target.size

    def residual(self, kernel: np.ndarray, tau: float) -> np.ndarray:
        return self.conv.conv(kernel) + tau - self.target

    def data_term(self, kernel: np.ndarray, tau: float) -> float:
        r = self.residual(kernel, tau)
        return float(np.sum(r * r)) / self.npix

    def __call__(self, params: np.ndarray) -> tuple[float, np.ndarray]:
        p = self.p
        k = params[:-1].reshape(p, p)
        tau = params[-1]
        r = self.residual(k, tau)
        data = float(np.sum(r * r)) / self.npix
        reg, dreg = _l1_smooth(k)
        scale = self.lam / (p * p)
        g_k = (2.0 / self.npix) * self.conv.correlate_with(r) + scale * dreg
        g_tau = 2.0 * float(np.sum(r)) / self.npix
        return data + scale * reg, np.append(g_k.ravel(), g_tau)

    def problem(self) -> OptimProblem:
        return OptimProblem(self.p * self.p + 1, self)


def psf_loss(model: PsfModel, sharp: np.ndarray, blurry_warped: np.ndarray) -> tuple[float, np.ndarray]:
    """Regularised forward-model loss and its gradient over ``[P.ravel(), tau]``.

    ``blurry_warped`` must already be cropped to the valid-convolution size.
    """
    obj = _PsfObjective(sharp, blurry_warped, model.size, model.lam)
    return obj(model.params())


def initial_model(sharp: np.ndarray, target: np.ndarray, p: int, lam: float) -> PsfModel:
    """Uniform unit-mass kernel; offset matching the mean brightness."""
    box = np.full((p, p), 1.0 / (p * p))
    conv = FixedImageConvolver(sharp, p)
    tau = float(np.mean(target) - np.mean(conv.conv(box)))
    return PsfModel(box, tau, lam)


def _fit_kernel(sharp, target, model: PsfModel, config) -> tuple[PsfModel, OptimReport]:
    obj = _PsfObjective(sharp, target, model.size, model.lam)
    rep = lbfgs_minimize(obj.problem(), model.params(), config)
    return PsfModel.from_params(rep.final_params, model.size, model.lam), rep


def _fit_warp_given_psf(sharp, blurry, model: PsfModel, warp: WarpMatrix, config):
    """Refine ``warp`` with the kernel and offset held fixed."""
    p = model.size
    h = p // 2
    oh, ow = valid_shape(np.shape(sharp), p)
    prediction = FixedImageConvolver(sharp, p).conv(model.kernel) + model.tau
    sampler = _WarpSampler(blurry, warp.degree, np.arange(h, h + oh), np.arange(h, h + ow))
    npix = oh * ow

    def fun(params):
        w = WarpMatrix.from_flat(params, warp.degree)
        vals, vjp = sampler.values_and_vjp(w)
        r = prediction - vals
        return float(np.sum(r * r)) / npix, vjp(-2.0 * r / npix)

    problem = OptimProblem(2 * n_features(warp.degree), fun)
    rep = lbfgs_minimize(problem, warp.flat(), config)
    return WarpMatrix.from_flat(rep.final_params, warp.degree), rep


def fit_psf(
    sharp: np.ndarray,
    blurry: np.ndarray,
    warp: WarpMatrix | None = None,
    p: int = 31,
    lam: float = DEFAULT_LAMBDA,
    refine_warp: bool = False,
    config: LbfgsConfig | None = None,
) -> tuple[PsfModel, WarpMatrix, OptimReport]:
    """Estimate kernel and offset, then optionally alternate with warp refinement.

    ``blurry`` is the raw (unwarped) blurry image, same size as ``sharp``.
    The returned report carries the final total loss and the summed
    iteration count of all stages; ``converged`` is true only if every
    stage converged.
    """
    sharp = np.asarray(sharp, dtype=np.float64)
    blurry = np.asarray(blurry, dtype=np.float64)
    if sharp.shape != blurry.shape:
        raise ValueError(f"sharp {sharp.shape} and blurry {blurry.shape} differ in shape")
    if p < 1 or p % 2 == 0 or p > min(sharp.shape):
        raise ValueError(f"PSF size must be odd and at most {min(sharp.shape)}, got {p}")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    warp = warp or WarpMatrix.identity()

    target = crop_to_valid(warp_image(blurry, warp), p)
    model = initial_model(sharp, target, p, lam)
    model, rep = _fit_kernel(sharp, target, model, config)
    reports = [rep]
    stage1_loss = rep.final_loss

    if refine_warp:
        for _ in range(REFINE_ROUNDS):
            warp, wrep = _fit_warp_given_psf(sharp, blurry, model, warp, config)
            target = crop_to_valid(warp_image(blurry, warp), p)
            model, rep = _fit_kernel(sharp, target, model, config)
            reports += [wrep, rep]

    final_loss, grad = _PsfObjective(sharp, target, p, lam)(model.params())
    summary = OptimReport(
        final_params=model.params(),
        final_loss=final_loss,
        iterations=sum(r.iterations for r in reports),
        converged=all(r.converged for r in reports),
        grad_norm=float(np.linalg.norm(grad)),
        message="; ".join(r.message for r in reports),
        loss_history=[stage1_loss, final_loss],
    )
    return model, warp, summary


def psf_octagon_report(kernel: np.ndarray, mass_fraction: float = 0.99) -> dict:
    """Shape statistics of a kernel.

    ``support_radius`` is the largest distance from the centre of absolute
    mass among the heaviest pixels that together hold ``mass_fraction`` of the
    absolute mass.
    """
    k = as_kernel(kernel)
    a = np.abs(k)
    total = a.sum()
    if total == 0:
        raise ValueError("degenerate kernel: all weights are zero")
    rr, cc = np.indices(k.shape)
    cy = float((a * rr).sum() / total)
    cx = float((a * cc).sum() / total)
    order = np.argsort(a.ravel(), kind="stable")[::-1]
    cum = np.cumsum(a.ravel()[order])
    # tolerate rounding when the fraction is hit exactly
    count = int(np.searchsorted(cum, mass_fraction * total * (1 - 1e-12))) + 1
    keep = order[:count]
    dist = np.hypot(rr.ravel()[keep] - cy, cc.ravel()[keep] - cx)
    return {
        "support_radius": float(dist.max()),
        "mass_center": (cy, cx),
        "negativity_fraction": float(np.maximum(0.0, -k).sum() / total),
    }
