"""Brain-boundary inpainting and the inverse-Hamming FFT high-pass filter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft
from scipy import ndimage

from .volume import BinaryMask3, Volume3, check_same_geometry


@dataclass(frozen=True)
class InverseHammingSpec:
    """Filter sizes (Hx, Hy, Hz) in k-space samples."""

    h: tuple[int, int, int] = (80, 80, 80)

    def __post_init__(self):
        if any(v <= 0 for v in self.h):
            raise ValueError(f"filter sizes must be positive, got {self.h}")


def inpaint_outside_mask(
    volume: Volume3,
    mask: BinaryMask3,
    max_iters: int = 400,
    tol: float = 1e-4,
) -> Volume3:
    """Replace voxels outside the mask with a smooth diffusion extension.

    Outside voxels start from the value of their nearest inside voxel and
    are then iteratively relaxed to the mean of their 6-neighbors (Jacobi
    sweeps, in-bounds neighbors only). Inside voxels are never touched.
    Iteration stops when the largest update falls below `tol` times the
    max inside magnitude, or after `max_iters` sweeps.
    """
    check_same_geometry(volume, mask, what="inpaint_outside_mask")
    inside = mask.bool()
    if not inside.any():
        raise ValueError("inpaint_outside_mask: empty mask")
    if inside.all():
        return volume.like(volume.data.copy())

    # seed: nearest-inside value for every outside voxel
    _, (ni, nj, nk) = ndimage.distance_transform_edt(~inside, return_indices=True)
    work = volume.data[ni, nj, nk]  # copy, input dtype

    scale = float(np.max(np.abs(volume.data[inside])))
    if scale == 0.0:
        scale = 1.0
    # in-bounds 6-neighbor counts are constant across sweeps
    counts = _six_neighbor_sum(np.ones(volume.dims, dtype=work.dtype))
    for _ in range(max_iters):
        nb_mean = _six_neighbor_sum(work) / counts
        np.copyto(nb_mean, work, where=inside)
        delta = float(np.max(np.abs(nb_mean - work)))
        work = nb_mean
        if delta < tol * scale:
            break
    work[inside] = volume.data[inside]  # inside values bit-for-bit
    return volume.like(work)


def _six_neighbor_sum(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    out[1:, :, :] += a[:-1, :, :]
    out[:-1, :, :] += a[1:, :, :]
    out[:, 1:, :] += a[:, :-1, :]
    out[:, :-1, :] += a[:, 1:, :]
    out[:, :, 1:] += a[:, :, :-1]
    out[:, :, :-1] += a[:, :, 1:]
    return out


def inverse_hamming_weight(k, spec: InverseHammingSpec = InverseHammingSpec()):
    """High-pass weight for centered k-space sample index k = (kx, ky, kz).

    Inside the ellipsoid kx^2/Hx^2 + ky^2/Hy^2 + kz^2/Hz^2 <= 1 the weight
    is 0.6 * (1 - cos(pi * sqrt(ratio))); outside it is exactly 1. The
    boundary value 1.2 (vs 1.0 just outside) is intentional.

    Accepts scalars or broadcastable arrays.
    """
    kx, ky, kz = k
    hx, hy, hz = spec.h
    ratio = (
        np.asarray(kx, dtype=np.float64) ** 2 / hx**2
        + np.asarray(ky, dtype=np.float64) ** 2 / hy**2
        + np.asarray(kz, dtype=np.float64) ** 2 / hz**2
    )
    inside = ratio <= 1.0
    w = np.where(inside, 0.6 * (1.0 - np.cos(np.pi * np.sqrt(ratio))), 1.0)
    if w.ndim == 0:
        return float(w)
    return w


def highpass_inverse_hamming(
    volume: Volume3,
    spec: InverseHammingSpec = InverseHammingSpec(),
    workers: int = 1,
) -> Volume3:
    """Apply the inverse-Hamming weight in centered k-space.

    DC sits at index (nx//2, ny//2, nz//2) after the centered shift. The
    weight is even in each k component, so real input maps to real output
    up to numerical residue; the real part is returned.
    """
    nx, ny, nz = volume.dims
    kx = np.arange(nx) - nx // 2
    ky = np.arange(ny) - ny // 2
    kz = np.arange(nz) - nz // 2
    w = inverse_hamming_weight(
        (kx[:, None, None], ky[None, :, None], kz[None, None, :]), spec
    )
    spectrum = sfft.fftshift(sfft.fftn(volume.data.astype(np.float64), workers=workers))
    spectrum *= w
    out = sfft.ifftn(sfft.ifftshift(spectrum), workers=workers)
    return volume.like(np.ascontiguousarray(out.real.astype(np.float32)))
