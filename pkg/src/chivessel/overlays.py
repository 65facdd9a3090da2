"""Deterministic QC overlay PNGs: mid-volume slices with mask outlines."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .volume import BinaryMask3, Volume3

_PLANE_NAMES = {0: "sagittal", 1: "coronal", 2: "axial"}


def _to_gray_u8(img: np.ndarray) -> np.ndarray:
    lo, hi = np.percentile(img, [1.0, 99.0])
    if hi <= lo:
        return np.zeros(img.shape, dtype=np.uint8)
    g = np.clip((img - lo) / (hi - lo), 0.0, 1.0)
    return (g * 255.0).astype(np.uint8)


def _edge(mask2d: np.ndarray) -> np.ndarray:
    m = mask2d.astype(bool)
    interior = m.copy()
    interior[1:, :] &= m[:-1, :]
    interior[:-1, :] &= m[1:, :]
    interior[:, 1:] &= m[:, :-1]
    interior[:, :-1] &= m[:, 1:]
    return m & ~interior


def save_overlay(slice2d: np.ndarray, mask2d: np.ndarray, path) -> None:
    gray = _to_gray_u8(slice2d)
    rgb = np.stack([gray, gray, gray], axis=-1)
    edge = _edge(mask2d)
    rgb[edge] = (255, 32, 32)
    # transpose so the first array axis runs left-to-right in the image
    Image.fromarray(np.swapaxes(rgb, 0, 1)[::-1]).save(path, format="PNG")


def write_overlays(volume: Volume3, mask: BinaryMask3, out_dir, tag: str) -> list:
    """Mid-slice overlays on all three planes; returns relative paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for axis in (0, 1, 2):
        mid = volume.dims[axis] // 2
        sl = [slice(None)] * 3
        sl[axis] = mid
        name = f"{tag}_{_PLANE_NAMES[axis]}.png"
        save_overlay(volume.data[tuple(sl)], mask.data[tuple(sl)], out_dir / name)
        written.append(f"overlays/{name}")
    return written
