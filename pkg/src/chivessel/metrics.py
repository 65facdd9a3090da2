"""Segmentation and reconstruction-quality metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .volume import BinaryMask3, Volume3, check_same_geometry

CONDITIONS = ("without_mask", "with_mask", "within_mask")


@dataclass
class MetricsReport:
    """Named scalar results plus provenance, serializable as JSON."""

    metrics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    condition: str | None = None

    def to_dict(self) -> dict:
        out = dict(self.metrics)
        out["condition"] = self.condition
        out["provenance"] = dict(self.provenance)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"


def dice(a: BinaryMask3, b: BinaryMask3) -> float:
    """2|A n B| / (|A| + |B|); two empty masks agree perfectly (1)."""
    check_same_geometry(a, b, what="dice")
    na = int(a.data.sum())
    nb = int(b.data.sum())
    if na + nb == 0:
        return 1.0
    inter = int((a.data & b.data).sum())
    return 2.0 * inter / (na + nb)


def dice_restricted(a: BinaryMask3, b: BinaryMask3, slice_spec) -> float:
    """Dice over the union of the named (axis, slice index) planes only."""
    check_same_geometry(a, b, what="dice_restricted")
    spec = list(slice_spec)
    if not spec:
        raise ValueError("dice_restricted: empty slice set")
    region = np.zeros(a.dims, dtype=bool)
    for axis, idx in spec:
        if axis not in (0, 1, 2):
            raise ValueError(f"axis must be 0/1/2, got {axis}")
        if not 0 <= idx < a.dims[axis]:
            raise IndexError(f"slice {idx} out of range for axis {axis} (n={a.dims[axis]})")
        sl = [slice(None)] * 3
        sl[axis] = idx
        region[tuple(sl)] = True
    ra = a.data.astype(bool) & region
    rb = b.data.astype(bool) & region
    na, nb = int(ra.sum()), int(rb.sum())
    if na + nb == 0:
        return 1.0
    return 2.0 * int((ra & rb).sum()) / (na + nb)


def central_slices(dims, n: int = 12):
    """(axis, index) pairs for the central n consecutive slices on all
    three planes; the standard restricted-evaluation protocol."""
    spec = []
    for axis in (0, 1, 2):
        size = dims[axis]
        count = min(n, size)
        start = (size - count) // 2
        spec.extend((axis, start + t) for t in range(count))
    return spec


def rmse_psnr(pred: Volume3, ref: Volume3, region: BinaryMask3) -> tuple[float, float]:
    """RMSE over the region and PSNR with peak = max |ref| in the region.

    Zero RMSE reports PSNR as +inf.
    """
    check_same_geometry(pred, ref, region, what="rmse_psnr")
    m = region.bool()
    if not m.any():
        raise ValueError("rmse_psnr: empty region")
    diff = pred.data[m].astype(np.float64) - ref.data[m].astype(np.float64)
    rmse = float(np.sqrt(np.mean(diff**2)))
    if rmse == 0.0:
        return 0.0, math.inf
    peak = float(np.max(np.abs(ref.data[m])))
    if peak == 0.0:
        return rmse, -math.inf
    return rmse, 20.0 * math.log10(peak / rmse)


def vessel_proportion(roi: BinaryMask3, vessel: BinaryMask3) -> float:
    """Percentage of ROI voxels inside the vessel mask."""
    check_same_geometry(roi, vessel, what="vessel_proportion")
    n = int(roi.data.sum())
    if n == 0:
        raise ValueError("vessel_proportion: empty ROI")
    return 100.0 * int((roi.data & vessel.data).sum()) / n


def masked_mean_susceptibility(
    chi: Volume3, roi: BinaryMask3, vessel: BinaryMask3, exclude_vessels: bool
) -> float:
    """Mean susceptibility over the ROI, optionally excluding vessels."""
    check_same_geometry(chi, roi, vessel, what="masked_mean_susceptibility")
    m = roi.bool()
    if exclude_vessels:
        m = m & ~vessel.bool()
    if not m.any():
        raise ValueError("masked_mean_susceptibility: effective region is empty")
    return float(chi.data[m].astype(np.float64).mean())
