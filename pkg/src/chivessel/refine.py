"""Connected-component pruning by mean anisotropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .volume import BinaryMask3, Volume3, check_same_geometry, connected_components


@dataclass(frozen=True)
class RefineConfig:
    aniso_thresh: float = 1.2e-3
    connectivity: int = 26

    def __post_init__(self):
        if self.aniso_thresh < 0:
            raise ValueError(f"aniso_thresh must be >= 0, got {self.aniso_thresh}")
        if self.connectivity not in (6, 18, 26):
            raise ValueError(f"connectivity must be 6/18/26, got {self.connectivity}")


def cc_mean_anisotropy(mask: BinaryMask3, ani: Volume3, connectivity: int = 26) -> np.ndarray:
    """Mean anisotropy per connected component (array indexed by label-1)."""
    check_same_geometry(mask, ani, what="cc_mean_anisotropy")
    labels, sizes, _ = connected_components(mask, connectivity)
    if sizes.size == 0:
        return np.zeros(0, dtype=np.float64)
    sums = np.bincount(
        labels.ravel(), weights=ani.data.ravel().astype(np.float64), minlength=sizes.size + 1
    )[1:]
    return sums / sizes


def remove_low_anisotropy(mask: BinaryMask3, ani: Volume3, cfg: RefineConfig = RefineConfig()) -> BinaryMask3:
    """Drop components whose mean anisotropy is strictly below the
    threshold; components exactly at the threshold are kept."""
    check_same_geometry(mask, ani, what="remove_low_anisotropy")
    labels, sizes, _ = connected_components(mask, cfg.connectivity)
    if sizes.size == 0:
        return mask.like(np.zeros(mask.dims, dtype=np.uint8))
    means = cc_mean_anisotropy(mask, ani, cfg.connectivity)
    keep = np.concatenate(([False], means >= cfg.aniso_thresh))
    return mask.like(keep[labels].astype(np.uint8))


def component_table(mask: BinaryMask3, ani: Volume3, connectivity: int = 26):
    """(size, mean anisotropy) rows for tuning dumps, largest first."""
    _, sizes, _ = connected_components(mask, connectivity)
    means = cc_mean_anisotropy(mask, ani, connectivity)
    order = np.argsort(-sizes, kind="stable")
    return [(int(sizes[c]), float(means[c])) for c in order]
