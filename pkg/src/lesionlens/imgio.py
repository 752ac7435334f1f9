"""Raster and tensor containers plus their binary codecs.

Images are binary PGM (``P5``) / PPM (``P6``) with maxval 255. Tensors use
the ``MNT1`` container::

    bytes 0-3   magic b"MNT1"
    byte  4     dtype code, 0x01 = float32 little-endian
    byte  5     ndim in [1, 4]
    ...         ndim x uint32 little-endian dims
    ...         row-major payload
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DataError, FormatError, IoError

PathLike = Union[str, Path]

TENSOR_MAGIC = b"MNT1"
DTYPE_FLOAT32 = 0x01
MAX_NDIM = 4

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class RasterImage:
    """8-bit image, row-major with interleaved channels."""

    width: int
    height: int
    channels: int
    data: bytes = field(repr=False)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise FormatError(f"image dimensions must be >= 1, got {self.width}x{self.height}")
        if self.channels not in (1, 3):
            raise FormatError(f"unsupported channel count {self.channels}")
        object.__setattr__(self, "data", bytes(self.data))
        expected = self.width * self.height * self.channels
        if len(self.data) != expected:
            raise FormatError(f"pixel buffer holds {len(self.data)} bytes, expected {expected}")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "RasterImage":
        """Build from a ``(h, w)`` or ``(h, w, 3)`` array of values in [0, 255]."""
        arr = np.asarray(arr)
        if arr.ndim == 2:
            channels = 1
        elif arr.ndim == 3:
            channels = arr.shape[2]
        else:
            raise FormatError(f"expected 2-D or 3-D array, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise FormatError("pixel values must lie in [0, 255]")
        h, w = arr.shape[:2]
        return cls(w, h, channels, np.ascontiguousarray(arr, dtype=np.uint8).tobytes())

    def to_array(self) -> np.ndarray:
        """Read-only uint8 view, ``(h, w)`` for gray and ``(h, w, 3)`` for RGB."""
        arr = np.frombuffer(self.data, dtype=np.uint8)
        if self.channels == 1:
            return arr.reshape(self.height, self.width)
        return arr.reshape(self.height, self.width, self.channels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.height, self.width


@dataclass(frozen=True)
class Tensor:
    """Dense float32 array of 1 to 4 axes with finite values."""

    dims: tuple[int, ...]
    data: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not 1 <= len(dims) <= MAX_NDIM:
            raise FormatError(f"tensor rank must be 1..{MAX_NDIM}, got {len(dims)}")
        if any(d < 1 for d in dims):
            raise FormatError(f"tensor dims must be >= 1, got {dims}")
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.size != int(np.prod(dims)):
            raise FormatError(f"payload holds {arr.size} values, dims {dims} need {int(np.prod(dims))}")
        if not np.all(np.isfinite(arr)):
            raise DataError("tensor payload contains NaN or Inf")
        arr = arr.reshape(dims).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_array(cls, arr) -> "Tensor":
        arr = np.asarray(arr, dtype=np.float32)
        return cls(arr.shape, arr)

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return self.dims == other.dims and self.data.tobytes() == other.data.tobytes()

    def __hash__(self):
        return hash((self.dims, self.data.tobytes()))


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc


def _write_bytes(path: PathLike, payload: bytes) -> None:
    try:
        Path(path).write_bytes(payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _parse_netpbm_header(raw: bytes) -> tuple[bytes, list[int], int]:
    """Return (magic, [width, height, maxval], payload offset)."""
    magic = raw[:2]
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        # whitespace and comment lines between header tokens
        while pos < len(raw) and (raw[pos : pos + 1].isspace() or raw[pos : pos + 1] == b"#"):
            if raw[pos : pos + 1] == b"#":
                while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(raw) and raw[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("truncated or malformed header")
        fields.append(int(raw[start:pos]))
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise FormatError("missing whitespace after maxval")
    return magic, fields, pos + 1


def decode_image(raw: bytes) -> RasterImage:
    if raw[:2] not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {raw[:2]!r}; expected P5 or P6")
    magic, (width, height, maxval), offset = _parse_netpbm_header(raw)
    if maxval != 255:
        raise FormatError(f"maxval {maxval} not supported; only 255")
    channels = 1 if magic == b"P5" else 3
    n = width * height * channels
    payload = raw[offset : offset + n]
    if len(payload) != n:
        raise FormatError(f"truncated payload: {len(payload)} of {n} bytes")
    return RasterImage(width, height, channels, payload)


def encode_image(img: RasterImage) -> bytes:
    if img.channels not in (1, 3):
        raise FormatError(f"cannot encode {img.channels}-channel image")
    magic = b"P5" if img.channels == 1 else b"P6"
    return magic + b"\n%d %d\n255\n" % (img.width, img.height) + img.data


def load_image(path: PathLike) -> RasterImage:
    return decode_image(_read_bytes(path))


def write_image(img: RasterImage, path: PathLike) -> None:
    _write_bytes(path, encode_image(img))


def decode_tensor(raw: bytes) -> Tensor:
    if raw[:4] != TENSOR_MAGIC:
        raise FormatError(f"bad tensor magic {raw[:4]!r}")
    if len(raw) < 6:
        raise FormatError("truncated tensor header")
    if raw[4] != DTYPE_FLOAT32:
        raise FormatError(f"unsupported dtype code 0x{raw[4]:02x}")
    ndim = raw[5]
    if not 1 <= ndim <= MAX_NDIM:
        raise FormatError(f"ndim {ndim} outside 1..{MAX_NDIM}")
    header_end = 6 + 4 * ndim
    if len(raw) < header_end:
        raise FormatError("truncated tensor dims")
    dims = struct.unpack(f"<{ndim}I", raw[6:header_end])
    count = int(np.prod(dims))
    payload = raw[header_end:]
    if len(payload) != 4 * count:
        raise FormatError(f"payload is {len(payload)} bytes, dims {dims} need {4 * count}")
    return Tensor(dims, np.frombuffer(payload, dtype="<f4"))


def encode_tensor(tensor: Tensor) -> bytes:
    header = TENSOR_MAGIC + bytes([DTYPE_FLOAT32, len(tensor.dims)])
    header += struct.pack(f"<{len(tensor.dims)}I", *tensor.dims)
    return header + np.ascontiguousarray(tensor.data, dtype="<f4").tobytes()


def load_tensor(path: PathLike) -> Tensor:
    return decode_tensor(_read_bytes(path))


def write_tensor(tensor: Tensor, path: PathLike) -> None:
    _write_bytes(path, encode_tensor(tensor))


def to_grayscale(img: RasterImage) -> RasterImage:
    """BT.601 luma, rounded half away from zero. Gray input comes back as is."""
    if img.channels == 1:
        return img
    rgb = img.to_array().astype(np.float64)
    luma = rgb @ np.array(LUMA_WEIGHTS)
    gray = np.clip(np.floor(luma + 0.5), 0, 255).astype(np.uint8)
    return RasterImage.from_array(gray)
