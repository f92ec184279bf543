from .backends import BACKEND_KINDS, DeblurBackend, rl_deblur, wiener_deblur
from .dataset import (
    AlignedPair,
    PatchPair,
    iter_patches,
    make_dataset,
    patch_mse,
    sample_patches,
    synth_blur,
    synth_pair,
)
from .tiling import (
    REASSEMBLY_MODES,
    TileLayout,
    blend_denominator,
    deblur_tiled,
    plan_tiles,
    seam_discrepancy,
    tile_weights,
)

__all__ = [
    "BACKEND_KINDS",
    "DeblurBackend",
    "rl_deblur",
    "wiener_deblur",
    "AlignedPair",
    "PatchPair",
    "iter_patches",
    "make_dataset",
    "patch_mse",
    "sample_patches",
    "synth_blur",
    "synth_pair",
    "REASSEMBLY_MODES",
    "TileLayout",
    "blend_denominator",
    "deblur_tiled",
    "plan_tiles",
    "seam_discrepancy",
    "tile_weights",
]
