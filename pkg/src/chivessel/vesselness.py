"""Multi-scale Hessian eigen-analysis and the tensor-anisotropy vesselness.

The response at one Gaussian scale is built from the eigenvalues of the
scale-normalized Hessian, sorted by magnitude (|l1| <= |l2| <= |l3|):

* l3 is regularized against the per-scale global minimum (tau * min l3)
  to stabilize weak responses, once with tau_rho and once with tau_nu;
* a fractional-anisotropy ratio of (l2, l_rho, l_nu) around the mean of
  the raw eigenvalues gives the shape score;
* the response is 0 for non-dark-tube signs, 1 at the per-scale maximum
  of (l_rho - l2), and 1 - shape_score otherwise, floored at 0. The floor
  matters: with the raw-eigenvalue mean in the ratio the score exceeds 1
  exactly where the regularization boosted a weak l3, and those voxels
  are background by construction.

Responses across scales are chained additively through a tanh step and a
running pointwise max. Eigen data (v1, l2, l3) is kept from each voxel's
winning scale (largest response, ties to the smaller scale) for use by
the region-growing condition and the component anisotropy filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import correlate1d

from .volume import Volume3

DEFAULT_SIGMAS = (0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class MfatConfig:
    """Scales and constants of the multi-scale vesselness."""

    sigmas: tuple = DEFAULT_SIGMAS
    tau_rho: float = 0.02
    tau_nu: float = 0.35
    delta: float = 0.3

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigmas)
        if not sig or any(s <= 0 for s in sig) or any(
            b <= a for a, b in zip(sig, sig[1:])
        ):
            raise ValueError(f"sigmas must be strictly increasing and positive: {sig}")
        object.__setattr__(self, "sigmas", sig)
        for name in ("tau_rho", "tau_nu"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")


@dataclass
class EigenSystem:
    """Eigenvalues sorted by magnitude plus the unit eigenvector of l1."""

    lambda1: float
    lambda2: float
    lambda3: float
    v1: np.ndarray


@dataclass
class VesselnessResult:
    """Vesselness volume plus per-voxel eigen data at the winning scale."""

    v_mfat: Volume3
    v1_field: np.ndarray  # (nx, ny, nz, 3) unit vectors
    lambda2_field: np.ndarray
    lambda3_field: np.ndarray
    ani: Volume3  # |lambda2 * lambda3| at the winning scale
    winning_scale: np.ndarray = field(repr=False, default=None)


@dataclass
class Mfat2dResult:
    """2D analog of VesselnessResult for slab images."""

    v: np.ndarray
    lambda2: np.ndarray
    lambda3: np.ndarray
    winning_scale: np.ndarray


# ---------------------------------------------------------------------------
# Gaussian smoothing and Hessian

def _gauss_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma**2))
    return k / k.sum()


def _smooth_nd(arr: np.ndarray, sigma: float) -> np.ndarray:
    k = _gauss_kernel(sigma)
    out = arr
    for ax in range(arr.ndim):
        out = correlate1d(out, k, axis=ax, mode="nearest")
    return out


def gaussian_smooth(volume: Volume3, sigma: float) -> Volume3:
    """Separable Gaussian smoothing, kernel radius ceil(3*sigma), unit-sum
    sampled kernel, replicate boundary."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return volume.like(_smooth_nd(volume.data, sigma))


def _second_diff(a: np.ndarray, axis: int) -> np.ndarray:
    """f[i+1] - 2 f[i] + f[i-1] with replicate boundary."""
    p = np.swapaxes(a, axis, 0)
    out = np.empty_like(p)
    out[1:-1] = p[2:] - 2.0 * p[1:-1] + p[:-2]
    if p.shape[0] >= 2:
        out[0] = p[1] - p[0]
        out[-1] = p[-2] - p[-1]
    else:
        out[0] = 0.0
    return np.swapaxes(out, axis, 0)


def _central_diff(a: np.ndarray, axis: int) -> np.ndarray:
    """(f[i+1] - f[i-1]) / 2 with replicate boundary."""
    p = np.swapaxes(a, axis, 0)
    out = np.empty_like(p)
    out[1:-1] = 0.5 * (p[2:] - p[:-2])
    if p.shape[0] >= 2:
        out[0] = 0.5 * (p[1] - p[0])
        out[-1] = 0.5 * (p[-1] - p[-2])
    else:
        out[0] = 0.0
    return np.swapaxes(out, axis, 0)


def hessian_at_scale(volume: Volume3, sigma: float):
    """Six second-derivative volumes of the sigma-smoothed input, each
    multiplied by sigma^2 (scale normalization).

    Returns (hxx, hyy, hzz, hxy, hxz, hyz); mixed terms are symmetric by
    construction (the 1D difference operators commute).
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    s = _smooth_nd(volume.data, sigma)
    s2 = sigma * sigma
    hxx = s2 * _second_diff(s, 0)
    hyy = s2 * _second_diff(s, 1)
    hzz = s2 * _second_diff(s, 2)
    gx = _central_diff(s, 0)
    hxy = s2 * _central_diff(gx, 1)
    hxz = s2 * _central_diff(gx, 2)
    hyz = s2 * _central_diff(_central_diff(s, 1), 2)
    return hxx, hyy, hzz, hxy, hxz, hyz


# ---------------------------------------------------------------------------
# Symmetric 3x3 eigensystems

def eig_sym3(h: np.ndarray) -> EigenSystem:
    """Eigen-decompose one symmetric 3x3 matrix, magnitude-sorted."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {h.shape}")
    asym = float(np.max(np.abs(h - h.T)))
    if asym > 1e-9 * max(1.0, float(np.linalg.norm(h))):
        raise ValueError(f"matrix not symmetric (max asymmetry {asym:g})")
    h = 0.5 * (h + h.T)
    w, q = np.linalg.eigh(h)
    order = np.argsort(np.abs(w), kind="stable")
    w = w[order]
    v1 = q[:, order[0]].copy()
    return EigenSystem(float(w[0]), float(w[1]), float(w[2]), v1)


def _eig_fields(hxx, hyy, hzz, hxy, hxz, hyz, chunk: int = 1_500_000):
    """Batched magnitude-sorted eigendecomposition over a whole grid.

    Returns (lam1, lam2, lam3, v1) as float32 arrays; v1 has a trailing
    length-3 axis. Work is chunked to bound memory.
    """
    shape = hxx.shape
    n = hxx.size
    flats = [np.ravel(a) for a in (hxx, hyy, hzz, hxy, hxz, hyz)]
    lam = np.empty((3, n), dtype=np.float32)
    v1 = np.empty((n, 3), dtype=np.float32)
    rows = np.arange(chunk)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        m = stop - start
        H = np.empty((m, 3, 3), dtype=np.float64)
        fxx, fyy, fzz, fxy, fxz, fyz = (f[start:stop] for f in flats)
        H[:, 0, 0] = fxx
        H[:, 1, 1] = fyy
        H[:, 2, 2] = fzz
        H[:, 0, 1] = H[:, 1, 0] = fxy
        H[:, 0, 2] = H[:, 2, 0] = fxz
        H[:, 1, 2] = H[:, 2, 1] = fyz
        w, q = np.linalg.eigh(H)
        order = np.argsort(np.abs(w), axis=1, kind="stable")
        w = np.take_along_axis(w, order, axis=1)
        lam[:, start:stop] = w.T
        v1[start:stop] = q[rows[:m], :, order[:, 0]]
    lam1, lam2, lam3 = (lam[i].reshape(shape) for i in range(3))
    return lam1, lam2, lam3, v1.reshape(shape + (3,))


# ---------------------------------------------------------------------------
# Per-scale response

def regularize_eigen(lambda3, min_lambda3, tau):
    """Regularize l3 against tau times the per-scale global minimum.

    Keeps l3 where it is stronger (more negative) than tau*min, boosts it
    to tau*min where it is weakly negative, and zeroes it where l3 >= 0.
    """
    l3 = np.asarray(lambda3)
    clamp = tau * min_lambda3
    out = np.where(l3 < clamp, l3, np.where(l3 < 0, clamp, 0.0))
    if out.ndim == 0:
        return float(out)
    return out


def fat_vesselness(lambda1, lambda2, lambda3, lambda_rho, lambda_nu):
    """Fractional-anisotropy score of (l2, l_rho, l_nu) around the mean of
    the raw eigenvalues (l1 + l2 + l3)/3.

    Zero where all three ratio terms vanish. Because the mean is taken
    over the raw triple while the ratio uses the regularized one, the
    score can exceed 1; callers floor the derived response at 0.
    """
    l1 = np.asarray(lambda1, dtype=np.float64)
    l2 = np.asarray(lambda2, dtype=np.float64)
    l3 = np.asarray(lambda3, dtype=np.float64)
    rho = np.asarray(lambda_rho, dtype=np.float64)
    nu = np.asarray(lambda_nu, dtype=np.float64)
    dbar = (l1 + l2 + l3) / 3.0
    num = (l2 - dbar) ** 2 + (rho - dbar) ** 2 + (nu - dbar) ** 2
    den = l2**2 + rho**2 + nu**2
    safe = np.where(den > 0, den, 1.0)
    out = np.where(den > 0, np.sqrt(1.5 * num / safe), 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def r_lambda(lambda2, lambda_rho, v_fat, max_gap):
    """Per-scale response: 0 for non-tube signs, 1 at the per-scale
    maximum of (l_rho - l2), else 1 - v_fat floored into [0, 1].

    Branches are evaluated in the listed order; the max-gap tie uses a
    1e-12 relative tolerance.
    """
    l2 = np.asarray(lambda2, dtype=np.float64)
    rho = np.asarray(lambda_rho, dtype=np.float64)
    vf = np.asarray(v_fat, dtype=np.float64)
    gap = rho - l2
    zero = (rho > gap) | (rho >= 0) | (l2 >= 0)
    is_max = np.abs(gap - max_gap) <= 1e-12 * abs(max_gap)
    out = np.where(zero, 0.0, np.where(is_max, 1.0, np.clip(1.0 - vf, 0.0, 1.0)))
    if out.ndim == 0:
        return float(out)
    return out


def _scale_response(lam1, lam2, lam3, cfg: MfatConfig, reduce_mask=None):
    """Response at one scale, with global reductions over reduce_mask
    (full grid when None)."""
    if reduce_mask is None:
        min_l3 = float(lam3.min())
    else:
        min_l3 = float(lam3[reduce_mask].min())
    lrho = regularize_eigen(lam3, min_l3, cfg.tau_rho)
    lnu = regularize_eigen(lam3, min_l3, cfg.tau_nu)
    vfat = fat_vesselness(lam1, lam2, lam3, lrho, lnu)
    gap = lrho - np.asarray(lam2, dtype=np.float64)
    if reduce_mask is None:
        max_gap = float(gap.max())
    else:
        max_gap = float(gap[reduce_mask].max())
    return r_lambda(lam2, lrho, vfat, max_gap).astype(np.float32)


# ---------------------------------------------------------------------------
# Multi-scale drivers

def _accumulate(scale_iter, delta: float):
    """Fold per-scale (r, fields...) into the running multi-scale state."""
    v = best_r = None
    kept = None
    win = None
    for j, (r, fields) in enumerate(scale_iter):
        if j == 0:
            v = r.copy()
            best_r = r
            kept = list(fields)
            win = np.zeros(r.shape, dtype=np.uint8)
        else:
            v += np.float32(delta) * np.tanh(r - np.float32(delta))
            np.maximum(v, r, out=v)
            upd = r > best_r
            best_r = np.where(upd, r, best_r)
            for idx, f in enumerate(fields):
                if f.ndim == upd.ndim:
                    kept[idx] = np.where(upd, f, kept[idx])
                else:
                    kept[idx] = np.where(upd[..., None], f, kept[idx])
            win[upd] = j
    return v, kept, win


def mfat(volume: Volume3, cfg: MfatConfig = MfatConfig(), reduce_mask=None) -> VesselnessResult:
    """Multi-scale vesselness of a 3D volume.

    reduce_mask (boolean array, optional) restricts the per-scale global
    reductions (min l3, max gap); default is the full volume.
    """

    def scales():
        for sigma in cfg.sigmas:
            h6 = hessian_at_scale(volume, sigma)
            lam1, lam2, lam3, v1 = _eig_fields(*h6)
            del h6
            r = _scale_response(lam1, lam2, lam3, cfg, reduce_mask)
            yield r, (lam2, lam3, v1)

    v, (lam2, lam3, v1), win = _unpack3(_accumulate(scales(), cfg.delta))
    ani = np.abs(lam2 * lam3)
    return VesselnessResult(
        v_mfat=volume.like(v),
        v1_field=v1,
        lambda2_field=lam2,
        lambda3_field=lam3,
        ani=volume.like(ani),
        winning_scale=win,
    )


def _unpack3(acc):
    v, kept, win = acc
    return v, tuple(kept), win


def mfat_2d(image: np.ndarray, cfg: MfatConfig = MfatConfig(), reduce_mask=None) -> Mfat2dResult:
    """Multi-scale vesselness of a 2D image.

    The 2D Hessian eigenpair (mu1, mu2), |mu1| <= |mu2|, is lifted to the
    3D machinery as (l1, l2, l3) := (mu1, mu2, mu2); everything else is
    unchanged.
    """
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {img.shape}")

    def scales():
        for sigma in cfg.sigmas:
            s = _smooth_nd(img, sigma)
            s2 = sigma * sigma
            hxx = s2 * _second_diff(s, 0)
            hyy = s2 * _second_diff(s, 1)
            hxy = s2 * _central_diff(_central_diff(s, 0), 1)
            mu1, mu2 = _eig_sym2(hxx, hyy, hxy)
            r = _scale_response(mu1, mu2, mu2, cfg, reduce_mask)
            yield r, (mu2,)

    v, (lam2,), win = _unpack3(_accumulate(scales(), cfg.delta))
    return Mfat2dResult(v=v, lambda2=lam2, lambda3=lam2.copy(), winning_scale=win)


def _eig_sym2(hxx, hyy, hxy):
    """Closed-form eigenvalues of symmetric 2x2 fields, |mu1| <= |mu2|."""
    a = np.asarray(hxx, dtype=np.float64)
    c = np.asarray(hyy, dtype=np.float64)
    b = np.asarray(hxy, dtype=np.float64)
    half_tr = 0.5 * (a + c)
    disc = np.sqrt((0.5 * (a - c)) ** 2 + b**2)
    hi = half_tr + disc
    lo = half_tr - disc
    swap = np.abs(hi) < np.abs(lo)
    mu1 = np.where(swap, hi, lo)
    mu2 = np.where(swap, lo, hi)
    return mu1.astype(np.float32), mu2.astype(np.float32)
