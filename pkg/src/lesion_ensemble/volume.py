"""3D volumes, intensity normalization, thresholding and the V3D file format.

Arrays are indexed ``[x, y, z]``. Whenever a volume is flattened (files,
raster ordering of components) the x index varies fastest, which is numpy's
Fortran order for an ``(nx, ny, nz)`` array.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .errors import CorruptFile, InvalidThreshold, InvalidVolume, ShapeMismatch, WrongFormat

MAGIC = b"V3D1"
_HEADER = struct.Struct("<4s3I3fB")

DTYPE_F32 = 0
DTYPE_U8 = 1
DTYPE_F64 = 2
_PAYLOAD_DTYPES = {DTYPE_F32: np.dtype("<f4"), DTYPE_U8: np.dtype("u1"), DTYPE_F64: np.dtype("<f8")}


def _f32(value: float) -> float:
    return float(np.float32(value))


@dataclass(frozen=True, eq=False)
class Volume3:
    """Dense scalar grid with physical voxel spacing in millimeters.

    ``data`` is stored as a read-only float64 array of shape ``(nx, ny, nz)``.
    Spacing is rounded to float32 on construction because that is the
    precision the file header stores; this keeps file round-trips exact.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 3 or min(data.shape) < 1:
            raise InvalidVolume(f"expected a non-empty 3D array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvalidVolume("volume contains NaN or Inf")
        spacing = tuple(_f32(s) for s in self.spacing)
        if len(spacing) != 3 or not all(np.isfinite(s) and s > 0 for s in spacing):
            raise InvalidVolume(f"spacing must be three positive numbers, got {self.spacing}")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(n) for n in self.data.shape)

    @property
    def size(self) -> int:
        return int(self.data.size)

    def flat(self) -> np.ndarray:
        """Voxel values in x-fastest order."""
        return self.data.ravel(order="F")

    @classmethod
    def from_flat(cls, dims, spacing, values) -> "Volume3":
        values = np.asarray(values, dtype=np.float64)
        nx, ny, nz = (int(n) for n in dims)
        if values.size != nx * ny * nz:
            raise InvalidVolume(f"{values.size} values do not fill a {nx}x{ny}x{nz} grid")
        return cls(values.reshape((nx, ny, nz), order="F"), tuple(spacing))

    def with_data(self, data) -> "Volume3":
        """New volume on the same grid carrying ``data``."""
        data = np.asarray(data)
        if data.shape != self.data.shape:
            raise ShapeMismatch(f"{data.shape} != {self.data.shape}")
        return Volume3(data, self.spacing)

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.data
        return self.data.astype(dtype)

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Volume3):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.dims == other.dims
            and self.data.tobytes() == other.data.tobytes()
        )

    __hash__ = None  # type: ignore[assignment]


ArrayLike = Union[Volume3, np.ndarray]


def as_array(v, dtype=np.float64) -> np.ndarray:
    return np.asarray(v, dtype=dtype)


def like(template, data):
    """Wrap ``data`` as a Volume3 when ``template`` is one, else return the array."""
    if isinstance(template, Volume3):
        return template.with_data(data)
    return np.asarray(data)


def is_prob_map(v) -> bool:
    a = as_array(v)
    return bool(np.all((a >= 0.0) & (a <= 1.0)))


def is_binary_mask(v) -> bool:
    a = as_array(v)
    return bool(np.all((a == 0.0) | (a == 1.0)))


def check_same_shape(*arrays) -> None:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) > 1:
        raise ShapeMismatch(f"shapes differ: {sorted(shapes)}")


def normalize_intensity(v: Volume3) -> Volume3:
    """Affinely rescale intensities to [0, 1]; a constant volume becomes all zeros."""
    lo = float(v.data.min())
    hi = float(v.data.max())
    if hi == lo:
        return v.with_data(np.zeros(v.dims))
    out = (v.data - lo) / (hi - lo)
    # guard against rounding just outside the unit interval
    return v.with_data(np.clip(out, 0.0, 1.0))


def threshold(p, t: float = 0.5):
    """Binarize: a voxel is foreground iff its value is >= ``t``."""
    if not 0.0 < t < 1.0:
        raise InvalidThreshold(f"threshold must lie in (0, 1), got {t}")
    return like(p, (as_array(p) >= t).astype(np.float64))


def _pick_dtype(v: Volume3) -> int:
    if is_binary_mask(v):
        return DTYPE_U8
    with np.errstate(over="ignore"):
        narrowed = v.data.astype(np.float32).astype(np.float64)
    if np.array_equal(narrowed, v.data):
        return DTYPE_F32
    return DTYPE_F64


def write_v3d(v: Volume3, path: Union[str, os.PathLike], dtype: Union[int, None] = None) -> None:
    """Write ``v`` as a V3D file.

    By default the narrowest payload that stores the data exactly is chosen:
    u8 for binary masks, f32 when every value is float32-representable, and
    otherwise the f64 payload (tag 2).
    """
    tag = _pick_dtype(v) if dtype is None else int(dtype)
    if tag not in _PAYLOAD_DTYPES:
        raise WrongFormat(f"unknown dtype tag {tag}")
    if tag == DTYPE_U8 and not is_binary_mask(v):
        raise InvalidVolume("u8 payload requires all values in {0, 1}")
    header = _HEADER.pack(MAGIC, *v.dims, *v.spacing, tag)
    payload = v.flat().astype(_PAYLOAD_DTYPES[tag]).tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_v3d(path: Union[str, os.PathLike]) -> Volume3:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise CorruptFile(f"{path}: truncated header")
    if raw[:4] != MAGIC:
        raise WrongFormat(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise CorruptFile(f"{path}: truncated header")
    _, nx, ny, nz, sx, sy, sz, tag = _HEADER.unpack_from(raw)
    if tag not in _PAYLOAD_DTYPES:
        raise WrongFormat(f"{path}: unknown dtype tag {tag}")
    dt = _PAYLOAD_DTYPES[tag]
    payload = raw[_HEADER.size:]
    n = nx * ny * nz
    if n == 0 or len(payload) != n * dt.itemsize:
        raise CorruptFile(f"{path}: payload has {len(payload)} bytes, dims {nx}x{ny}x{nz} need {n * dt.itemsize}")
    values = np.frombuffer(payload, dtype=dt).astype(np.float64)
    try:
        return Volume3.from_flat((nx, ny, nz), (sx, sy, sz), values)
    except InvalidVolume as exc:
        raise CorruptFile(f"{path}: {exc}") from exc


def io_roundtrip(v: Volume3, path) -> Volume3:
    write_v3d(v, path)
    return read_v3d(path)
