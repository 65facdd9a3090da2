"""Vessel-geometry-guided region growing.

The mask starts from the seed map. Seed voxels are queued cluster by
cluster (largest cluster first, ties by smallest member index; ascending
linear index within a cluster) and processed FIFO. A popped voxel admits
an adjacent candidate when the candidate's intensity clears the upper
limit outright, is not below the lower limit, and the vesselness at the
candidate beats a penalty built from direction misalignment, intensity
dissimilarity, and local anisotropy. Because inclusion is monotone and
every admitted voxel later re-examines its own neighbors, the final mask
is the least fixed point and does not depend on queue order.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .vesselness import VesselnessResult
from .volume import (
    BinaryMask3,
    Volume3,
    check_same_geometry,
    connected_components,
    linear_index,
    warn_empty,
)

EPS_INTENSITY = 1e-12

_OFFSETS_6 = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
_OFFSETS_26 = [
    (di, dj, dk)
    for di in (-1, 0, 1)
    for dj in (-1, 0, 1)
    for dk in (-1, 0, 1)
    if (di, dj, dk) != (0, 0, 0)
]


@dataclass(frozen=True)
class GrowConfig:
    """Intensity-limit multipliers and traversal options.

    The lower limit is mean - gamma2 * std over seed intensities; gamma1
    is the symmetric multiplier for the upper limit.
    """

    gamma1: float = 0.5
    gamma2: float = 0.5
    connectivity: int = 26
    restrict_to_brain: bool = True

    def __post_init__(self):
        if self.connectivity not in (6, 26):
            raise ValueError(f"connectivity must be 6 or 26, got {self.connectivity}")


@dataclass(frozen=True)
class GrowLimits:
    upper: float
    lower: float

    def __post_init__(self):
        if self.upper < self.lower:
            raise ValueError(f"upper limit {self.upper} below lower limit {self.lower}")


def intensity_limits(chi: Volume3, seeds: BinaryMask3, cfg: GrowConfig = GrowConfig()) -> GrowLimits:
    """Upper/lower susceptibility limits from seed-voxel statistics."""
    check_same_geometry(chi, seeds, what="intensity_limits")
    m = seeds.bool()
    n = int(m.sum())
    if n == 0:
        raise ValueError("intensity_limits: empty seed mask")
    vals = chi.data[m].astype(np.float64)
    mean = float(vals.mean())
    std = float(np.sqrt(np.mean((vals - mean) ** 2)))
    return GrowLimits(upper=mean + cfg.gamma1 * std, lower=mean - cfg.gamma2 * std)


def _cond(p, q, chi, vm, ani, v1x, v1y, v1z, upper, lower):
    """Scalar growing condition on flat column-major arrays.

    Threshold is 0.5 * (1 - omega) / (ratio * (1 - exp(-10 * ani))):
    misaligned directions raise it, dissimilar intensities raise it, and
    low anisotropy raises it (blob-like voxels only enter by clearing the
    upper limit). Perfect alignment admits regardless of the rest.
    """
    iq = float(chi[q])
    if iq > upper:
        return True
    if iq < lower:
        return False
    omega = abs(
        float(v1x[p]) * float(v1x[q])
        + float(v1y[p]) * float(v1y[q])
        + float(v1z[p]) * float(v1z[q])
    )
    misalign = 1.0 - omega
    if misalign <= 0.0:
        return float(vm[q]) >= 0.0
    aniso_gain = 1.0 - math.exp(-10.0 * float(ani[q]))
    if aniso_gain <= 0.0:
        return False
    ip = float(chi[p])
    a = ip if ip > EPS_INTENSITY else EPS_INTENSITY
    b = iq if iq > EPS_INTENSITY else EPS_INTENSITY
    ratio = a / b if a <= b else b / a
    thr = 0.5 * misalign / (ratio * aniso_gain)
    return float(vm[q]) >= thr


def _flat_fields(chi: Volume3, ves: VesselnessResult):
    chi_f = chi.data.ravel(order="F").astype(np.float64)
    vm_f = ves.v_mfat.data.ravel(order="F").astype(np.float64)
    ani_f = ves.ani.data.ravel(order="F").astype(np.float64)
    v1x = ves.v1_field[..., 0].ravel(order="F").astype(np.float64)
    v1y = ves.v1_field[..., 1].ravel(order="F").astype(np.float64)
    v1z = ves.v1_field[..., 2].ravel(order="F").astype(np.float64)
    return chi_f, vm_f, ani_f, v1x, v1y, v1z


def grow_condition(p, q, chi: Volume3, ves: VesselnessResult, limits: GrowLimits) -> bool:
    """Inclusion test for candidate q adjacent to in-mask voxel p.

    p and q are (i, j, k) voxel coordinates.
    """
    dims = chi.dims
    pl = linear_index(*p, dims)
    ql = linear_index(*q, dims)
    fields = _flat_fields(chi, ves)
    return _cond(pl, ql, *fields, limits.upper, limits.lower)


def _initial_queue(seeds: BinaryMask3, connectivity: int) -> np.ndarray:
    """Seed linear indices ordered by (cluster size desc, cluster min index
    asc), ascending index within each cluster."""
    labels, sizes, min_idx = connected_components(seeds, connectivity)
    if sizes.size == 0:
        return np.zeros(0, dtype=np.int64)
    rank = np.lexsort((min_idx, -sizes))  # cluster labels minus one, best first
    nx, ny, _ = seeds.dims
    ii, jj, kk = np.nonzero(labels)
    lin = (ii + nx * (jj + ny * kk)).astype(np.int64)
    lab = labels[ii, jj, kk].astype(np.int64)
    order = np.lexsort((lin, lab))  # group by label, ascending index inside
    lin, lab = lin[order], lab[order]
    edges = np.searchsorted(lab, np.arange(1, sizes.size + 2))
    return np.concatenate([lin[edges[c] : edges[c + 1]] for c in rank])


def region_grow(
    chi: Volume3,
    seeds: BinaryMask3,
    ves: VesselnessResult,
    brain: BinaryMask3,
    cfg: GrowConfig = GrowConfig(),
) -> BinaryMask3:
    """Grow the seed mask over the susceptibility map; see module docs."""
    check_same_geometry(chi, seeds, brain, what="region_grow")
    if seeds.count() == 0:
        warn_empty("region_grow: empty seed mask, returning empty result")
        return seeds.like(np.zeros(seeds.dims, dtype=np.uint8))
    limits = intensity_limits(chi, seeds, cfg)

    nx, ny, nz = chi.dims
    chi_f, vm_f, ani_f, v1x, v1y, v1z = _flat_fields(chi, ves)
    brain_f = brain.bool().ravel(order="F") if cfg.restrict_to_brain else None
    mask_f = seeds.data.ravel(order="F").copy()

    offsets = _OFFSETS_26 if cfg.connectivity == 26 else _OFFSETS_6
    steps = [(di, dj, dk, di + nx * (dj + ny * dk)) for di, dj, dk in offsets]
    upper, lower = limits.upper, limits.lower

    queue = deque(_initial_queue(seeds, cfg.connectivity).tolist())
    while queue:
        p = queue.popleft()
        i = p % nx
        rest = p // nx
        j = rest % ny
        k = rest // ny
        for di, dj, dk, doff in steps:
            qi = i + di
            if qi < 0 or qi >= nx:
                continue
            qj = j + dj
            if qj < 0 or qj >= ny:
                continue
            qk = k + dk
            if qk < 0 or qk >= nz:
                continue
            q = p + doff
            if mask_f[q]:
                continue
            if brain_f is not None and not brain_f[q]:
                continue
            if _cond(p, q, chi_f, vm_f, ani_f, v1x, v1y, v1z, upper, lower):
                mask_f[q] = 1
                queue.append(q)
    out = mask_f.reshape(chi.dims, order="F")
    return seeds.like(out)
