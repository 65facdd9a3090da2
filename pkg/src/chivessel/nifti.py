"""Minimal NIfTI-1 reader/writer (.nii and .nii.gz, single-file images).

Only what the pipeline needs: 3D scalar volumes and 8-bit masks. The raw
348-byte header travels with each loaded volume as opaque metadata so that
saves copy the source affine, units, and description through unchanged.
Gzip output is written with mtime=0 and no embedded filename, keeping
byte-identical files across runs.
"""

from __future__ import annotations

import gzip
import os
from pathlib import Path

import numpy as np

from .errors import InputError, OutputError
from .volume import BinaryMask3, Volume3

HEADER_DTD = [
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "i2", (8,)),
    ("intent_p1", "f4"),
    ("intent_p2", "f4"),
    ("intent_p3", "f4"),
    ("intent_code", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("slice_start", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("scl_slope", "f4"),
    ("scl_inter", "f4"),
    ("slice_end", "i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("slice_duration", "f4"),
    ("toffset", "f4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "i2"),
    ("sform_code", "i2"),
    ("quatern_b", "f4"),
    ("quatern_c", "f4"),
    ("quatern_d", "f4"),
    ("qoffset_x", "f4"),
    ("qoffset_y", "f4"),
    ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)),
    ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
]
HEADER_DTYPE = np.dtype(HEADER_DTD)
HEADER_SIZE = HEADER_DTYPE.itemsize  # 348

DTYPE_BY_CODE = {
    2: np.uint8,
    4: np.int16,
    8: np.int32,
    16: np.float32,
    64: np.float64,
    256: np.int8,
    512: np.uint16,
    768: np.uint32,
    1024: np.int64,
}
CODE_BY_DTYPE = {np.dtype(v): k for k, v in DTYPE_BY_CODE.items()}


def _open_for_read(path):
    p = str(path)
    if p.endswith(".nii.gz"):
        return gzip.open(p, "rb")
    if p.endswith(".nii"):
        return open(p, "rb")
    raise InputError(f"unsupported file extension (want .nii or .nii.gz): {p}")


def _read_header(raw: bytes):
    """Returns (header record, byte_swapped)."""
    hdr = np.frombuffer(raw, dtype=HEADER_DTYPE, count=1)[0]
    if int(hdr["sizeof_hdr"]) == 348:
        return hdr.copy(), False
    hdr = np.frombuffer(raw, dtype=HEADER_DTYPE.newbyteorder(), count=1)[0]
    if int(hdr["sizeof_hdr"]) == 348:
        return hdr.copy(), True
    raise InputError("not a NIfTI-1 file (bad sizeof_hdr)")


def _load_array(path):
    try:
        with _open_for_read(path) as fh:
            raw = fh.read(HEADER_SIZE)
            if len(raw) < HEADER_SIZE:
                raise InputError(f"truncated NIfTI header: {path}")
            hdr, swapped = _read_header(raw)
            ndim = int(hdr["dim"][0])
            if ndim < 3:
                raise InputError(f"expected a 3D image, got {ndim}D: {path}")
            dims = tuple(int(d) for d in hdr["dim"][1 : ndim + 1])
            if any(d != 1 for d in dims[3:]):
                raise InputError(f"expected a 3D image, got dims {dims}: {path}")
            dims = dims[:3]
            code = int(hdr["datatype"])
            if code not in DTYPE_BY_CODE:
                raise InputError(f"unsupported NIfTI datatype code {code}: {path}")
            dtype = np.dtype(DTYPE_BY_CODE[code])
            if swapped:
                dtype = dtype.newbyteorder()
            fh.seek(int(hdr["vox_offset"]))
            count = int(np.prod(dims))
            buf = fh.read(count * dtype.itemsize)
            if len(buf) < count * dtype.itemsize:
                raise InputError(f"truncated NIfTI data: {path}")
            arr = np.frombuffer(buf, dtype=dtype, count=count).reshape(dims, order="F")
            if swapped:
                arr = arr.byteswap().view(arr.dtype.newbyteorder())
                hdr = hdr.astype(HEADER_DTYPE)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    spacing = tuple(float(abs(s)) for s in hdr["pixdim"][1:4])
    if any(s <= 0 for s in spacing):
        raise InputError(f"non-positive voxel spacing in {path}")
    slope = float(hdr["scl_slope"])
    inter = float(hdr["scl_inter"])
    if np.isfinite(slope) and slope != 0.0 and (slope != 1.0 or inter != 0.0):
        if np.isfinite(inter):
            arr = arr.astype(np.float64) * slope + inter
    return arr, spacing, hdr


def load_volume(path) -> Volume3:
    """Load a scalar 3D volume; raises InputError on non-finite data."""
    arr, spacing, hdr = _load_array(path)
    arr = np.asarray(arr, dtype=np.float32 if arr.dtype.itemsize <= 4 else np.float64)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"volume contains NaN/Inf: {path}")
    return Volume3(arr, spacing, header=hdr)


def load_mask(path) -> BinaryMask3:
    """Load a binary mask; nonzero values collapse to 1."""
    arr, spacing, hdr = _load_array(path)
    if not np.all(np.isfinite(np.asarray(arr, dtype=np.float64))):
        raise InputError(f"mask contains NaN/Inf: {path}")
    return BinaryMask3((np.asarray(arr) != 0).astype(np.uint8), spacing, header=hdr)


def _fresh_header(dims, spacing):
    hdr = np.zeros((), dtype=HEADER_DTYPE)
    hdr["sizeof_hdr"] = 348
    hdr["regular"] = b"r"
    hdr["dim"] = [3, dims[0], dims[1], dims[2], 1, 1, 1, 1]
    hdr["pixdim"] = [1.0, spacing[0], spacing[1], spacing[2], 0, 0, 0, 0]
    hdr["vox_offset"] = 352.0
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["xyzt_units"] = 2  # mm
    hdr["sform_code"] = 1
    hdr["srow_x"] = [spacing[0], 0, 0, 0]
    hdr["srow_y"] = [0, spacing[1], 0, 0]
    hdr["srow_z"] = [0, 0, spacing[2], 0]
    hdr["magic"] = b"n+1"
    return hdr


def _prepare_header(obj, dtype_code, bitpix):
    if obj.header is not None and getattr(obj.header, "dtype", None) == HEADER_DTYPE:
        hdr = obj.header.copy()
        if hdr.dtype.byteorder == ">" or (hdr.dtype.byteorder == "=" and not hdr.dtype.isnative):
            hdr = hdr.astype(HEADER_DTYPE)
    else:
        hdr = _fresh_header(obj.dims, obj.spacing)
    hdr["dim"] = [3, obj.dims[0], obj.dims[1], obj.dims[2], 1, 1, 1, 1]
    hdr["pixdim"][1:4] = obj.spacing
    hdr["datatype"] = dtype_code
    hdr["bitpix"] = bitpix
    hdr["scl_slope"] = 1.0
    hdr["scl_inter"] = 0.0
    hdr["vox_offset"] = 352.0
    hdr["magic"] = b"n+1"
    return hdr


def _write(path, hdr, arr):
    payload = hdr.tobytes() + b"\x00" * 4 + arr.tobytes(order="F")
    p = str(path)
    tmp = p + ".part"
    try:
        if p.endswith(".nii.gz"):
            # filename="" and mtime=0 keep the gzip container byte-stable
            with open(tmp, "wb") as fh:
                with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                    gz.write(payload)
        elif p.endswith(".nii"):
            with open(tmp, "wb") as fh:
                fh.write(payload)
        else:
            raise OutputError(f"unsupported output extension (want .nii or .nii.gz): {p}")
        os.replace(tmp, p)
    except OSError as e:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OutputError(f"cannot write {path}: {e}") from e


def save_volume(volume: Volume3, path) -> None:
    """Write a volume as float32 (or float64 if that is its dtype)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    arr = volume.data
    if arr.dtype != np.float64:
        arr = arr.astype(np.float32)
    code = CODE_BY_DTYPE[arr.dtype]
    hdr = _prepare_header(volume, code, arr.dtype.itemsize * 8)
    _write(path, hdr, arr)


def save_mask(mask: BinaryMask3, path) -> None:
    """Write a mask as an 8-bit integer volume with values {0,1}."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    hdr = _prepare_header(mask, CODE_BY_DTYPE[np.dtype(np.uint8)], 8)
    _write(path, hdr, mask.data)
