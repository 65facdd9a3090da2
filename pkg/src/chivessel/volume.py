"""Geometry-aware 3D scalar volumes and binary masks.

Conventions used throughout the package:

* arrays are indexed ``[i, j, k]`` with shape ``(nx, ny, nz)``,
* linearization is column-major (first index fastest),
* spacing is millimeters per voxel along each axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import GeometryError

Triple = tuple[float, float, float]


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass
class Volume3:
    """Scalar 3D grid with voxel spacing and pass-through file metadata."""

    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    header: Optional[object] = field(default=None, repr=False)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"Volume3 expects 3D data, got shape {self.data.shape}")
        if any(n < 1 for n in self.data.shape):
            raise ValueError(f"all dims must be >= 1, got {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be three positive floats, got {self.spacing}")
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float32)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("Volume3 data contains NaN/Inf")
        self.data = _freeze(self.data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def like(self, data: np.ndarray) -> "Volume3":
        """New volume with the same geometry and header."""
        return Volume3(data, self.spacing, self.header)


@dataclass
class BinaryMask3:
    """Binary volume ({0,1} per voxel) on the same kind of grid as Volume3."""

    data: np.ndarray
    spacing: Triple = (1.0, 1.0, 1.0)
    header: Optional[object] = field(default=None, repr=False)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError(f"BinaryMask3 expects 3D data, got shape {self.data.shape}")
        if any(n < 1 for n in self.data.shape):
            raise ValueError(f"all dims must be >= 1, got {self.data.shape}")
        self.spacing = tuple(float(s) for s in self.spacing)
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing must be three positive floats, got {self.spacing}")
        data = self.data
        if data.dtype != np.uint8:
            if data.dtype == bool:
                data = data.astype(np.uint8)
            else:
                arr = np.asarray(data)
                if not np.all((arr == 0) | (arr == 1)):
                    raise ValueError("mask values must be exactly 0 or 1")
                data = arr.astype(np.uint8)
        elif not np.all(data <= 1):
            raise ValueError("mask values must be exactly 0 or 1")
        self.data = _freeze(data)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def bool(self) -> np.ndarray:
        return self.data.view(bool)

    def count(self) -> int:
        return int(self.data.sum())

    def like(self, data: np.ndarray) -> "BinaryMask3":
        return BinaryMask3(data, self.spacing, self.header)


def check_same_geometry(*grids, what: str = "inputs") -> None:
    """Raise GeometryError unless all grids share dims and spacing."""
    ref = grids[0]
    for g in grids[1:]:
        if g.dims != ref.dims:
            raise GeometryError(f"{what}: dims differ ({ref.dims} vs {g.dims})")
        if not np.allclose(g.spacing, ref.spacing, rtol=1e-5, atol=0.0):
            raise GeometryError(f"{what}: spacing differs ({ref.spacing} vs {g.spacing})")


# ---------------------------------------------------------------------------
# Linearization

def linear_index(i: int, j: int, k: int, dims: Sequence[int]) -> int:
    """Column-major linear index i + nx*(j + ny*k); first axis fastest."""
    nx, ny, nz = dims
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
        raise IndexError(f"coord ({i},{j},{k}) out of bounds for dims {tuple(dims)}")
    return int(i + nx * (j + ny * k))


def unlinear_index(idx: int, dims: Sequence[int]) -> tuple[int, int, int]:
    """Inverse of linear_index."""
    nx, ny, nz = dims
    if not (0 <= idx < nx * ny * nz):
        raise IndexError(f"index {idx} out of bounds for dims {tuple(dims)}")
    i = idx % nx
    rest = idx // nx
    return i, rest % ny, rest // ny


def linear_indices_of(mask_bool: np.ndarray) -> np.ndarray:
    """Column-major linear indices of True voxels, ascending."""
    nx, ny, nz = mask_bool.shape
    ii, jj, kk = np.nonzero(mask_bool)
    idx = ii + nx * (jj + ny * kk)
    return np.sort(idx.astype(np.int64))


# ---------------------------------------------------------------------------
# Connected components

_CONN_RANK = {6: 1, 18: 2, 26: 3}


def connected_components(mask: BinaryMask3, connectivity: int = 26):
    """Label foreground under 6/18/26-adjacency.

    Returns (labels, sizes, min_lin_index): labels is an int32 volume with
    values 0 (background) and 1..C; sizes[c-1] is the voxel count of
    component c; min_lin_index[c-1] is the smallest column-major linear
    index among its voxels.
    """
    if connectivity not in _CONN_RANK:
        raise ValueError(f"connectivity must be one of 6/18/26, got {connectivity}")
    structure = ndimage.generate_binary_structure(3, _CONN_RANK[connectivity])
    labels, ncomp = ndimage.label(mask.bool(), structure=structure)
    labels = labels.astype(np.int32)
    if ncomp == 0:
        return labels, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    sizes = np.bincount(labels.ravel(), minlength=ncomp + 1)[1:].astype(np.int64)
    nx, ny, nz = mask.dims
    ii, jj, kk = np.nonzero(labels)
    lin = (ii + nx * (jj + ny * kk)).astype(np.int64)
    lab = labels[ii, jj, kk]
    min_idx = np.full(ncomp + 1, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(min_idx, lab, lin)
    return labels, sizes, min_idx[1:]


# ---------------------------------------------------------------------------
# Slab-wise maximum intensity projection

@dataclass
class MipStack:
    """Per-slab MIP images with the source slice index of each maximum."""

    axis: int
    slabs: list  # list of 2D float arrays
    argmax: list  # list of 2D int arrays, global slice index along `axis`
    slab_extents: list  # list of (start, stop) slice ranges, stop exclusive


def mip_slabs(volume: Volume3, slab_mm: float, axis: int = 2) -> MipStack:
    """Overlapping-slab maximum intensity projection along one axis.

    Slab thickness in slices is round(slab_mm / spacing[axis]); the stride
    is half of that (floored, at least 1) so consecutive slabs overlap by
    half a slab. Ties in the per-pixel maximum go to the smallest slice.
    """
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    sp = volume.spacing[axis]
    thickness = int(round(slab_mm / sp))
    if thickness < 1:
        raise ValueError(f"slab of {slab_mm} mm is thinner than one slice ({sp} mm)")
    stride = max(1, thickness // 2)
    n = volume.dims[axis]
    data = np.moveaxis(volume.data, axis, -1)  # view; (a, b, n)
    slabs, argmaxes, extents = [], [], []
    for start in range(0, n, stride):
        stop = min(start + thickness, n)
        chunk = data[..., start:stop]
        slabs.append(chunk.max(axis=-1))
        argmaxes.append(start + chunk.argmax(axis=-1).astype(np.int32))
        extents.append((start, stop))
    return MipStack(axis=axis, slabs=slabs, argmax=argmaxes, slab_extents=extents)


def backproject(seeds2d: Sequence[np.ndarray], stack: MipStack, dims) -> np.ndarray:
    """Union of per-slab 2D seeds mapped back to their 3D argmax voxels.

    Returns a uint8 {0,1} array of shape `dims`.
    """
    if len(seeds2d) != len(stack.slabs):
        raise ValueError(f"{len(seeds2d)} seed images for {len(stack.slabs)} slabs")
    out = np.zeros(tuple(dims), dtype=np.uint8)
    out_m = np.moveaxis(out, stack.axis, -1)
    for seed, amax, slab in zip(seeds2d, stack.argmax, stack.slabs):
        if seed.shape != slab.shape:
            raise ValueError(f"seed image shape {seed.shape} != slab shape {slab.shape}")
        a, b = np.nonzero(seed)
        out_m[a, b, amax[a, b]] = 1
    return out


# ---------------------------------------------------------------------------
# Masked statistics

def masked_mean_std(volume: Volume3, mask: BinaryMask3) -> tuple[float, float]:
    """Population mean and std (divide by N) over mask voxels."""
    check_same_geometry(volume, mask, what="masked_mean_std")
    m = mask.bool()
    n = int(m.sum())
    if n == 0:
        raise ValueError("masked_mean_std: empty mask")
    vals = volume.data[m].astype(np.float64)
    mean = float(vals.mean())
    std = float(np.sqrt(np.mean((vals - mean) ** 2)))
    return mean, std


def warn_empty(msg: str) -> None:
    warnings.warn(msg, RuntimeWarning, stacklevel=3)
