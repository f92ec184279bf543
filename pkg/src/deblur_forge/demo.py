"""Self-contained end-to-end run on generated data.

A text-like scene is warped to form the sharp view and blurred with a known
Gaussian PSF, offset and noise to form the blurry view. The pipeline then
recovers the warp and the PSF from the pair and deblurs the aligned blurry
image tile by tile. Metrics compare every estimate with the known truth.
"""

from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .conv import conv_fft
from .evaluation import psnr
from .image import reflect_pad, save_image
from .pipeline import DeblurBackend, deblur_tiled
from .psf import PsfModel, fit_psf, psf_octagon_report
from .synthetic import gaussian_kernel, random_warp, smooth_random_image, text_like_image
from .warp import fit_warp, grid_mapping_error, warp_image

log = logging.getLogger(__name__)

THRESHOLDS = {
    "warp_grid_error_px": 0.1,
    "kernel_rel_error": 0.05,
}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage


@contextmanager
def _stage(name: str):
    t0 = time.perf_counter()
    try:
        yield
    except Exception as exc:
        raise StageError(name, exc) from exc
    log.info("%-12s done in %.1f s", name, time.perf_counter() - t0)


def make_demo_pair(seed: int, size: int = 240, psf_size: int = 11, sigma: float = 2.0, tau: float = 0.05, noise: float = 1e-3, warp_amplitude: float = 0.005):
    """Generate (sharp, blurry, true warp, true PSF model)."""
    scene = 0.75 * text_like_image((size, size), seed) + 0.25 * smooth_random_image((size, size), (0.7, 6.0), seed + 1)
    true_warp = random_warp(3, warp_amplitude, seed + 2)
    true_psf = PsfModel(gaussian_kernel(psf_size, sigma), tau, 0.0)
    sharp = warp_image(scene, true_warp)
    h = psf_size // 2
    rng = np.random.default_rng(seed + 3)
    blurry = conv_fft(reflect_pad(scene, h, h, h, h), true_psf.kernel, "valid") + tau
    blurry = blurry + noise * rng.standard_normal(blurry.shape)
    return sharp, blurry, true_warp, true_psf


def run_demo(
    seed: int,
    out_dir: str | Path,
    size: int = 240,
    psf_size: int = 11,
    lam: float = 1e-3,
    epsilon: float = 1e-3,
    core: int = 96,
    overlap: int = 24,
    figures: bool = True,
) -> dict:
    """Run the whole pipeline and write images, estimates and ``metrics.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    with _stage("synthesize"):
        sharp, blurry, true_warp, true_psf = make_demo_pair(seed, size, psf_size)
        save_image(sharp, out / "sharp.png")
        save_image(blurry, out / "blurry.png")
        true_warp.save(out / "warp_true.txt")
        true_psf.save(out / "psf_true.txt")

    with _stage("fit_warp"):
        warp, warp_rep = fit_warp(blurry, sharp, degree=3)
        grid_mean, grid_max = grid_mapping_error(warp, true_warp, sharp.shape)
        warp.save(out / "warp.txt")

    with _stage("fit_psf"):
        model, warp, psf_rep = fit_psf(sharp, blurry, warp, psf_size, lam)
        model.save(out / "psf.txt")
        k_err = float(np.linalg.norm(model.kernel - true_psf.kernel) / np.linalg.norm(true_psf.kernel))
        shape_stats = psf_octagon_report(model.kernel)

    with _stage("deblur"):
        aligned = warp_image(blurry, warp)
        backend = DeblurBackend("wiener", model, epsilon=epsilon)
        deblurred = deblur_tiled(aligned, backend, core, overlap, "blend")
        save_image(aligned, out / "aligned_blurry.png")
        save_image(deblurred, out / "deblurred.png")
        border = 2 * psf_size
        psnr_blurry = psnr(aligned, sharp, border)
        psnr_deblurred = psnr(deblurred, sharp, border)

    metrics = {
        "seed": seed,
        "image_size": list(sharp.shape),
        "psf_size": psf_size,
        "warp_grid_error_px": grid_mean,
        "warp_grid_error_max_px": grid_max,
        "warp_loss": warp_rep.final_loss,
        "warp_iterations": warp_rep.iterations,
        "kernel_rel_error": k_err,
        "tau_estimate": model.tau,
        "tau_error": abs(model.tau - true_psf.tau),
        "psf_loss": psf_rep.final_loss,
        "psf_iterations": psf_rep.iterations,
        "psf_negativity_fraction": shape_stats["negativity_fraction"],
        "psf_support_radius": shape_stats["support_radius"],
        "psnr_blurry_db": float(psnr_blurry),
        "psnr_deblurred_db": float(psnr_deblurred),
        "thresholds": THRESHOLDS,
    }
    checks = {
        "warp_grid_error": bool(grid_mean < THRESHOLDS["warp_grid_error_px"]),
        "kernel_rel_error": bool(k_err < THRESHOLDS["kernel_rel_error"]),
        "psnr_improved": bool(psnr_deblurred > psnr_blurry),
    }
    metrics["checks"] = checks
    metrics["passed"] = all(checks.values())
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")

    if figures:
        with _stage("figures"):
            from . import plots

            fig_dir = out / "figures"
            fig_dir.mkdir(exist_ok=True)
            plots.plot_kernels({"true": true_psf.kernel, "estimated": model.kernel}, fig_dir / "psf.png")
            plots.plot_warp_grid(warp, sharp.shape, fig_dir / "warp_grid.png", reference=true_warp)
            plots.plot_images({"sharp": sharp, "aligned blurry": aligned, "deblurred": deblurred}, fig_dir / "images.png")
    return metrics
