"""Forward-model estimation and tiled deblurring for paired sharp/blurry photographs.

The package estimates a polynomial warp that aligns a blurry photograph with
its sharp counterpart, fits a point spread function plus brightness offset
to the aligned pair, synthesises training pairs from that model, and
deblurs large images tile by tile with classical non-blind backends.
"""

from .conv import conv_fft, conv_naive, correlate_fft, correlate_naive
from .evaluation import levenshtein, ocr_score, psnr
from .image import load_image, save_image
from .optim import LbfgsConfig, OptimProblem, OptimReport, lbfgs_minimize
from .psf import PsfModel, fit_psf, psf_loss
from .warp import WarpMatrix, fit_warp, warp_image, warping_loss

__version__ = "0.1.0"

__all__ = [
    "conv_fft",
    "conv_naive",
    "correlate_fft",
    "correlate_naive",
    "levenshtein",
    "ocr_score",
    "psnr",
    "load_image",
    "save_image",
    "LbfgsConfig",
    "OptimProblem",
    "OptimReport",
    "lbfgs_minimize",
    "PsfModel",
    "fit_psf",
    "psf_loss",
    "WarpMatrix",
    "fit_warp",
    "warp_image",
    "warping_loss",
]
