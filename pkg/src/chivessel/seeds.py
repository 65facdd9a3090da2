"""Seed generation: large vessels from the relaxation-rate map, small
vessels from the susceptibility product via slab MIP, combined by union."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .filters import InverseHammingSpec, highpass_inverse_hamming, inpaint_outside_mask
from .vesselness import MfatConfig, mfat, mfat_2d
from .volume import (
    BinaryMask3,
    Volume3,
    backproject,
    check_same_geometry,
    mip_slabs,
)


@dataclass(frozen=True)
class SeedConfig:
    """Threshold multipliers and slab/filter settings for seed generation."""

    k_large: float = 2.0
    k_small: float = 1.0
    slab_mm: float = 16.0
    mip_axis: int = 2
    hamming: InverseHammingSpec = field(default_factory=InverseHammingSpec)
    mfat: MfatConfig = field(default_factory=MfatConfig)
    stats_domain: str = "brain"  # 'brain', 'volume', or 'support'
    inpaint_max_iters: int = 400
    inpaint_tol: float = 1e-4

    def __post_init__(self):
        if not self.k_large > self.k_small > 0:
            raise ValueError(
                f"need k_large > k_small > 0, got {self.k_large}, {self.k_small}"
            )
        if self.slab_mm <= 0:
            raise ValueError(f"slab_mm must be positive, got {self.slab_mm}")
        if self.stats_domain not in ("brain", "volume", "support"):
            raise ValueError(
                f"stats_domain must be 'brain', 'volume' or 'support', got {self.stats_domain!r}"
            )


def _threshold_stats(values: np.ndarray, domain: np.ndarray, mode: str):
    """Mean/std of the vesselness over the chosen statistics domain.

    'support' restricts to voxels with a nonzero response; the vesselness
    is exactly zero over most of a volume, so moments over a whole mask
    mostly measure how much of it responded at all.
    """
    dom = domain
    if mode == "support":
        dom = domain & (values > 0)
        if not dom.any():
            dom = domain
    vals = values[dom].astype(np.float64)
    mean = float(vals.mean())
    std = float(np.sqrt(np.mean((vals - mean) ** 2)))
    return mean, std


def large_vessel_seeds(
    r2star: Volume3,
    brain: BinaryMask3,
    cfg: SeedConfig = SeedConfig(),
    workers: int = 1,
    intermediates: dict | None = None,
) -> BinaryMask3:
    """Threshold the vesselness of the high-passed relaxation-rate map.

    Pipeline: inpaint outside the brain -> inverse-Hamming high-pass ->
    multi-scale vesselness -> keep voxels strictly above
    mean + k_large * std (statistics over the configured domain),
    intersected with the brain mask.
    """
    check_same_geometry(r2star, brain, what="large_vessel_seeds")
    inpainted = inpaint_outside_mask(r2star, brain, cfg.inpaint_max_iters, cfg.inpaint_tol)
    hp = highpass_inverse_hamming(inpainted, cfg.hamming, workers=workers)
    v = mfat(hp, cfg.mfat).v_mfat
    domain = brain.bool() if cfg.stats_domain != "volume" else np.ones(brain.dims, dtype=bool)
    mean, std = _threshold_stats(v.data, domain, cfg.stats_domain)
    seeds = (v.data > mean + cfg.k_large * std) & brain.bool()
    if intermediates is not None:
        intermediates["r2star_highpass"] = hp
        intermediates["v_mfat_r2star"] = v
    return brain.like(seeds.astype(np.uint8))


def small_vessel_seeds(
    chi_para: Volume3,
    chi_dia: Volume3,
    large_seeds: BinaryMask3,
    brain: BinaryMask3,
    cfg: SeedConfig = SeedConfig(),
    intermediates: dict | None = None,
) -> BinaryMask3:
    """Slab-MIP the susceptibility product, suppress already-seeded
    positions, threshold per-slab 2D vesselness, and back-project.

    Each slab image of the product map is multiplied by (1 - projected
    large seeds), where the projection samples the large-seed mask at the
    slab's stored argmax voxels. The 2D vesselness of each suppressed slab
    is thresholded at mean + k_small * std over the slab's brain footprint
    (strictly above); surviving pixels return to 3D at their argmax voxel.
    """
    check_same_geometry(chi_para, chi_dia, large_seeds, brain, what="small_vessel_seeds")
    product = chi_para.data * chi_dia.data
    stack = mip_slabs(chi_para.like(product), cfg.slab_mm, cfg.mip_axis)

    large_m = np.moveaxis(large_seeds.data, cfg.mip_axis, -1)
    brain_m = np.moveaxis(brain.bool(), cfg.mip_axis, -1)
    seeds2d = []
    for slab, amax, (start, stop) in zip(stack.slabs, stack.argmax, stack.slab_extents):
        mip_seed = np.take_along_axis(large_m, amax[..., None], axis=-1)[..., 0]
        suppressed = slab * (1.0 - mip_seed)
        footprint = brain_m[..., start:stop].any(axis=-1)
        if not footprint.any():
            seeds2d.append(np.zeros(slab.shape, dtype=np.uint8))
            continue
        v2 = mfat_2d(suppressed, cfg.mfat).v
        domain2 = footprint if cfg.stats_domain != "volume" else np.ones(slab.shape, dtype=bool)
        mean, std = _threshold_stats(v2, domain2, cfg.stats_domain)
        seeds2d.append((v2 > mean + cfg.k_small * std).astype(np.uint8))
    mask = backproject(seeds2d, stack, chi_para.dims)
    mask &= brain.data
    if intermediates is not None:
        intermediates["product_mip"] = [s.copy() for s in stack.slabs]
    return brain.like(mask)


def combine_seeds(large: BinaryMask3, small: BinaryMask3) -> BinaryMask3:
    """Voxel-wise union of the two seed maps."""
    check_same_geometry(large, small, what="combine_seeds")
    return large.like(large.data | small.data)
