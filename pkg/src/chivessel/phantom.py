"""Synthetic scenes with analytic ground truth.

Primitives are rasterized in physical (mm) coordinates and composed
additively. Tubes and blobs share one radial profile: full intensity out
to the stated radius, then a Gaussian rim whose transition width (FWHM)
is radius/2, mimicking a PSF-limited edge. Tubes are bright in all three
contrast volumes; blobs only in the relaxation-rate and paramagnetic
ones, leaving the diamagnetic map clean of them. Ground-truth masks are
the voxels within the stated radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .volume import BinaryMask3, Volume3

RIM_FWHM_FRACTION = 0.5  # rim transition FWHM as a fraction of the radius
RIM_SIGMA_PER_FWHM = 1.0 / (2.0 * np.sqrt(2.0 * np.log(2.0)))
RIM_CUTOFF_SIGMAS = 4.0  # Gaussian rim is truncated this many sigmas past the radius


@dataclass
class PhantomScene:
    r2star_like: Volume3
    chi_para_like: Volume3
    chi_dia_like: Volume3
    brain: BinaryMask3
    gt_vessels: BinaryMask3
    gt_blobs: BinaryMask3
    rng_seed: int
    scene_spec: dict


def _point_inside(p, dims, spacing) -> bool:
    return all(0.0 <= p[a] <= (dims[a] - 1) * spacing[a] for a in range(3))


def _segment_min_distance(dist, spacing, a, b, cutoff, z_chunk=32):
    """Lower dist (mm) toward the distance to segment a-b, within cutoff."""
    nx, ny, nz = dist.shape
    dx, dy, dz = spacing
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    ab2 = float(ab @ ab)
    lo = np.minimum(a, b) - cutoff
    hi = np.maximum(a, b) + cutoff
    i0, j0, k0 = (max(0, int(np.floor(lo[t] / spacing[t]))) for t in range(3))
    i1 = min(nx, int(np.ceil(hi[0] / dx)) + 1)
    j1 = min(ny, int(np.ceil(hi[1] / dy)) + 1)
    k1 = min(nz, int(np.ceil(hi[2] / dz)) + 1)
    if i0 >= i1 or j0 >= j1 or k0 >= k1:
        return
    xs = (np.arange(i0, i1, dtype=np.float64) * dx)[:, None, None]
    ys = (np.arange(j0, j1, dtype=np.float64) * dy)[None, :, None]
    for ks in range(k0, k1, z_chunk):
        ke = min(k1, ks + z_chunk)
        zs = (np.arange(ks, ke, dtype=np.float64) * dz)[None, None, :]
        px = xs - a[0]
        py = ys - a[1]
        pz = zs - a[2]
        if ab2 > 0:
            t = np.clip((px * ab[0] + py * ab[1] + pz * ab[2]) / ab2, 0.0, 1.0)
        else:
            t = 0.0
        d2 = (px - t * ab[0]) ** 2 + (py - t * ab[1]) ** 2 + (pz - t * ab[2]) ** 2
        block = dist[i0:i1, j0:j1, ks:ke]
        np.minimum(block, np.sqrt(d2, dtype=np.float64).astype(np.float32), out=block)


def _rim_sigma(radius: float) -> float:
    return RIM_FWHM_FRACTION * radius * RIM_SIGMA_PER_FWHM


def _profile(dist, radius, intensity):
    """Flat core out to `radius`, then a Gaussian rim whose transition
    width (FWHM) is radius/2."""
    s = _rim_sigma(radius)
    cutoff = radius + RIM_CUTOFF_SIGMAS * s
    rim = np.exp(-((np.maximum(dist, radius) - radius) ** 2) / (2.0 * s * s))
    field = np.where(dist <= cutoff, intensity * rim, 0.0).astype(np.float32)
    return field


def _rasterize(dims, spacing, segments, radius, intensity):
    """(added field, mask) for a union of segments with one radius."""
    dist = np.full(dims, np.inf, dtype=np.float32)
    cutoff = radius + RIM_CUTOFF_SIGMAS * _rim_sigma(radius)
    for a, b in segments:
        _segment_min_distance(dist, spacing, a, b, cutoff)
    return _profile(dist, radius, intensity), dist <= radius


def generate_tube(path, radius: float, intensity: float, into: Volume3):
    """Add a tube along a polyline (mm) to a volume.

    Returns (updated volume, tube mask). A zero-length path is a no-op
    with an empty mask.
    """
    if radius <= 0:
        raise ValueError(f"tube radius must be positive, got {radius}")
    pts = [np.asarray(p, dtype=np.float64) for p in path]
    if len(pts) < 1:
        raise ValueError("tube path needs at least one point")
    for p in pts:
        if not _point_inside(p, into.dims, into.spacing):
            raise ValueError(f"tube path point {tuple(p)} lies outside the volume")
    segments = [(a, b) for a, b in zip(pts, pts[1:]) if float(np.linalg.norm(b - a)) > 0]
    if not segments:
        return into.like(into.data.copy()), BinaryMask3(
            np.zeros(into.dims, dtype=np.uint8), into.spacing, into.header
        )
    field, mask = _rasterize(into.dims, into.spacing, segments, radius, intensity)
    return into.like(into.data + field), BinaryMask3(
        mask.astype(np.uint8), into.spacing, into.header
    )


def generate_blob(center, radius: float, intensity: float, into: Volume3):
    """Add a sphere (same radial profile as tubes) to a volume."""
    if radius <= 0:
        raise ValueError(f"blob radius must be positive, got {radius}")
    c = np.asarray(center, dtype=np.float64)
    if not _point_inside(c, into.dims, into.spacing):
        raise ValueError(f"blob center {tuple(c)} lies outside the volume")
    field, mask = _rasterize(into.dims, into.spacing, [(c, c)], radius, intensity)
    return into.like(into.data + field), BinaryMask3(
        mask.astype(np.uint8), into.spacing, into.header
    )


def _validate_scene_spec(spec: dict) -> dict:
    known = {"shape", "spacing", "noise_sigma_frac", "brain_margin_vox", "tubes", "blobs"}
    unknown = set(spec) - known
    if unknown:
        raise ConfigError(f"unknown scene spec fields: {sorted(unknown)}")
    out = {
        "shape": tuple(int(v) for v in spec.get("shape", (128, 128, 128))),
        "spacing": tuple(float(v) for v in spec.get("spacing", (1.0, 1.0, 1.0))),
        "noise_sigma_frac": float(spec.get("noise_sigma_frac", 0.02)),
        "brain_margin_vox": float(spec.get("brain_margin_vox", 6.0)),
        "tubes": [],
        "blobs": [],
    }
    if len(out["shape"]) != 3 or any(n < 8 for n in out["shape"]):
        raise ConfigError(f"scene shape must be three sizes >= 8, got {out['shape']}")
    if len(out["spacing"]) != 3 or any(s <= 0 for s in out["spacing"]):
        raise ConfigError(f"scene spacing must be three positive floats, got {out['spacing']}")
    if out["noise_sigma_frac"] < 0:
        raise ConfigError("noise_sigma_frac must be >= 0")
    for n, tube in enumerate(spec.get("tubes", []) or []):
        extra = set(tube) - {"path", "radius", "intensity"}
        if extra:
            raise ConfigError(f"tubes[{n}]: unknown fields {sorted(extra)}")
        try:
            path = [[float(c) for c in p] for p in tube["path"]]
            radius = float(tube["radius"])
            intensity = float(tube.get("intensity", 1.0))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"tubes[{n}]: bad or missing field ({e})") from e
        if any(len(p) != 3 for p in path) or len(path) < 2:
            raise ConfigError(f"tubes[{n}]: path must be >= 2 points of 3 coords")
        if radius <= 0:
            raise ConfigError(f"tubes[{n}]: radius must be positive")
        out["tubes"].append({"path": path, "radius": radius, "intensity": intensity})
    for n, blob in enumerate(spec.get("blobs", []) or []):
        extra = set(blob) - {"center", "radius", "intensity"}
        if extra:
            raise ConfigError(f"blobs[{n}]: unknown fields {sorted(extra)}")
        try:
            center = [float(c) for c in blob["center"]]
            radius = float(blob["radius"])
            intensity = float(blob.get("intensity", 1.0))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"blobs[{n}]: bad or missing field ({e})") from e
        if len(center) != 3:
            raise ConfigError(f"blobs[{n}]: center must have 3 coords")
        if radius <= 0:
            raise ConfigError(f"blobs[{n}]: radius must be positive")
        out["blobs"].append({"center": center, "radius": radius, "intensity": intensity})
    return out


def _brain_ellipsoid(dims, margin_vox) -> np.ndarray:
    semis = [max(1.0, n / 2.0 - margin_vox) for n in dims]
    center = [(n - 1) / 2.0 for n in dims]
    ii = ((np.arange(dims[0]) - center[0]) / semis[0])[:, None, None]
    jj = ((np.arange(dims[1]) - center[1]) / semis[1])[None, :, None]
    kk = ((np.arange(dims[2]) - center[2]) / semis[2])[None, None, :]
    return (ii**2 + jj**2 + kk**2) <= 1.0


def generate_scene(spec: dict, rng_seed: int = 0) -> PhantomScene:
    """Compose tubes and blobs into the three contrast volumes.

    Raises ConfigError if ground-truth masks overlap or any primitive
    leaves the ellipsoidal brain mask.
    """
    spec = _validate_scene_spec(spec)
    dims = spec["shape"]
    spacing = spec["spacing"]
    r2 = np.zeros(dims, dtype=np.float32)
    para = np.zeros(dims, dtype=np.float32)
    dia = np.zeros(dims, dtype=np.float32)
    vessel_gt = np.zeros(dims, dtype=bool)
    blob_gt = np.zeros(dims, dtype=bool)

    base = Volume3(np.zeros(dims, dtype=np.float32), spacing)
    for n, tube in enumerate(spec["tubes"]):
        try:
            vol, mask = generate_tube(tube["path"], tube["radius"], tube["intensity"], base)
        except ValueError as e:
            raise ConfigError(f"tubes[{n}]: {e}") from e
        field = vol.data
        r2 += field
        para += field
        dia += field
        vessel_gt |= mask.bool()
    for n, blob in enumerate(spec["blobs"]):
        try:
            vol, mask = generate_blob(blob["center"], blob["radius"], blob["intensity"], base)
        except ValueError as e:
            raise ConfigError(f"blobs[{n}]: {e}") from e
        field = vol.data
        r2 += field
        para += field
        blob_gt |= mask.bool()

    if (vessel_gt & blob_gt).any():
        raise ConfigError("scene invalid: tube and blob ground-truth masks overlap")
    brain = _brain_ellipsoid(dims, spec["brain_margin_vox"])
    outside = (vessel_gt | blob_gt) & ~brain
    if outside.any():
        raise ConfigError(
            f"scene invalid: {int(outside.sum())} primitive voxels fall outside the brain ellipsoid"
        )

    tube_peak = max((t["intensity"] for t in spec["tubes"]), default=1.0)
    sigma = spec["noise_sigma_frac"] * tube_peak
    rng = np.random.default_rng(rng_seed)
    if sigma > 0:
        r2 += rng.normal(0.0, sigma, dims).astype(np.float32)
        para += rng.normal(0.0, sigma, dims).astype(np.float32)
        dia += rng.normal(0.0, sigma, dims).astype(np.float32)

    return PhantomScene(
        r2star_like=Volume3(r2, spacing),
        chi_para_like=Volume3(para, spacing),
        chi_dia_like=Volume3(dia, spacing),
        brain=BinaryMask3(brain.astype(np.uint8), spacing),
        gt_vessels=BinaryMask3(vessel_gt.astype(np.uint8), spacing),
        gt_blobs=BinaryMask3(blob_gt.astype(np.uint8), spacing),
        rng_seed=rng_seed,
        scene_spec=spec,
    )


# Fractional layout of the stock scene: three tubes of radius 1/2/3 and
# two blobs of radius 6/10, kept well apart inside the brain ellipsoid so
# grown halos cannot bridge between primitives (needs grids >= ~112^3).
_STOCK_TUBES = [
    {"p0": (0.375, 0.50, 0.16), "p1": (0.375, 0.50, 0.84), "radius": 3.0, "intensity": 1.0},
    {"p0": (0.625, 0.19, 0.31), "p1": (0.625, 0.81, 0.70), "radius": 2.0, "intensity": 1.0},
    {"p0": (0.19, 0.625, 0.75), "p1": (0.81, 0.625, 0.75), "radius": 1.0, "intensity": 1.0},
]
_STOCK_BLOBS = [
    {"center": (0.30, 0.30, 0.60), "radius": 10.0, "intensity": 1.25},
    {"center": (0.70, 0.58, 0.22), "radius": 6.0, "intensity": 1.25},
]


def default_scene_spec(shape=(128, 128, 128), spacing=(1.0, 1.0, 1.0)) -> dict:
    """The stock acceptance scene, scaled to the requested grid."""
    ext = [(shape[a] - 1) * spacing[a] for a in range(3)]

    def mm(frac):
        return [frac[a] * ext[a] for a in range(3)]

    return {
        "shape": list(shape),
        "spacing": list(spacing),
        "noise_sigma_frac": 0.02,
        "brain_margin_vox": 6.0,
        "tubes": [
            {"path": [mm(t["p0"]), mm(t["p1"])], "radius": t["radius"], "intensity": t["intensity"]}
            for t in _STOCK_TUBES
        ],
        "blobs": [
            {"center": mm(b["center"]), "radius": b["radius"], "intensity": b["intensity"]}
            for b in _STOCK_BLOBS
        ],
    }
