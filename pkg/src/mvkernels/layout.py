"""Tensor layouts: the protocol I/O contract and the packed kernel formats.

Protocol layouts (row-major, last index fastest):
    input    (B, C_in,  d_image^k, N_B)
    output   (B, C_out, d_out^k,   N_B)
    filters  (N_B, C_in, C_out, d_filter^k)
    bias     (N_B, C_out)

Packed layouts used by the optimized kernels, with package length L:
    input    (C_in,  d_image^k, B/L, N_B, L)
    output   (C_out, d_out^k,   B/L, N_B, L)
    filters  (C_in, C_out, d_filter^k, N_B)   -- blades of one filter element adjacent

The spatial multi-index p over d^k is linearized row-major (first coordinate
slowest). All transforms here are bijective permutations: values are moved,
never recomputed, so round-trips are bit-exact.

This module also defines the binary tensor file format used by parity tests
and the language bindings: a little-endian header followed by the raw
payload. Payloads for fixtures are single precision; the header carries a
dtype code so that anything else can be rejected with a clear error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import BatchNotDivisible, ShapeMismatch


@dataclass(frozen=True)
class Dims:
    """Problem sizes for a k-D convolution (valid mode: no padding, unit
    stride, no dilation, so d_out = d_image - d_filter + 1)."""

    B: int
    C_in: int
    C_out: int
    d_image: int
    d_filter: int
    k: int

    def __post_init__(self):
        for name in ("B", "C_in", "C_out", "d_image", "d_filter", "k"):
            if getattr(self, name) < 1:
                raise ShapeMismatch(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_out < 1:
            raise ShapeMismatch(
                f"d_filter {self.d_filter} exceeds d_image {self.d_image}"
            )

    @property
    def d_out(self) -> int:
        return self.d_image - self.d_filter + 1

    @property
    def n_blades(self) -> int:
        return 1 << self.k

    @property
    def in_positions(self) -> int:
        return self.d_image**self.k

    @property
    def out_positions(self) -> int:
        return self.d_out**self.k

    @property
    def filter_positions(self) -> int:
        return self.d_filter**self.k

    def input_shape(self) -> tuple[int, ...]:
        return (self.B, self.C_in, self.in_positions, self.n_blades)

    def output_shape(self) -> tuple[int, ...]:
        return (self.B, self.C_out, self.out_positions, self.n_blades)

    def filters_shape(self) -> tuple[int, ...]:
        return (self.n_blades, self.C_in, self.C_out, self.filter_positions)

    def bias_shape(self) -> tuple[int, ...]:
        return (self.n_blades, self.C_out)


def _check_shape(name: str, arr: np.ndarray, shape: tuple[int, ...]) -> None:
    if arr.shape != shape:
        raise ShapeMismatch(f"{name} has shape {arr.shape}, expected {shape}")


def pack_input(x: np.ndarray, dims: Dims, L: int) -> np.ndarray:
    """Protocol input -> packed input.

    packed[c, p, b // L, blade, b % L] == x[b, c, p, blade]. Requires the
    batch to split into whole packages (B % L == 0); callers wanting padding
    must pad explicitly so FLOP accounting stays honest.
    """
    _check_shape("input", x, dims.input_shape())
    if dims.B % L != 0:
        raise BatchNotDivisible(dims.B, L)
    nb = dims.n_blades
    xg = x.reshape(dims.B // L, L, dims.C_in, dims.in_positions, nb)
    return np.ascontiguousarray(xg.transpose(2, 3, 0, 4, 1))


def pack_filters(f: np.ndarray, dims: Dims) -> np.ndarray:
    """Protocol filters -> packed filters: blades of one element adjacent.

    packed[c_in, c_out, q, blade] == f[blade, c_in, c_out, q].
    """
    _check_shape("filters", f, dims.filters_shape())
    return np.ascontiguousarray(f.transpose(1, 2, 3, 0))


def unpack_output(y: np.ndarray, dims: Dims, L: int) -> np.ndarray:
    """Packed output -> protocol output (inverse of the input packing,
    applied to output-shaped data)."""
    nb = dims.n_blades
    expected = (dims.C_out, dims.out_positions, dims.B // L, nb, L)
    _check_shape("packed output", y, expected)
    yt = y.transpose(2, 4, 0, 1, 3)  # (B/L, L, C_out, p, blade)
    return np.ascontiguousarray(
        yt.reshape(dims.B, dims.C_out, dims.out_positions, nb)
    )


def spatial_coords(d: int, k: int) -> np.ndarray:
    """(d^k, k) row-major coordinate table for a k-dim cube of side d."""
    grids = np.meshgrid(*([np.arange(d)] * k), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def gather_index_table(dims: Dims) -> np.ndarray:
    """in_index[o, q]: flat input position feeding output position o through
    filter position q (valid convolution, so simply coords(o) + coords(q))."""
    out_c = spatial_coords(dims.d_out, dims.k)  # (P_out, k)
    fil_c = spatial_coords(dims.d_filter, dims.k)  # (Q, k)
    strides = dims.d_image ** np.arange(dims.k - 1, -1, -1, dtype=np.int64)
    idx = (out_c[:, None, :] + fil_c[None, :, :]) @ strides
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    idx.flags.writeable = False
    return idx


# --- binary tensor file format -------------------------------------------

_MAGIC = b"MVTF"
_VERSION = 1
_DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_TO_CODE = {np.dtype(np.float32): 1, np.dtype(np.float64): 2}


class LayoutTag(IntEnum):
    GENERIC = 0
    CONV_INPUT = 1
    CONV_OUTPUT = 2
    CONV_FILTERS = 3
    CONV_BIAS = 4
    PACKED_INPUT = 5
    PACKED_OUTPUT = 6
    PACKED_FILTERS = 7
    LINEAR_INPUT = 8
    LINEAR_OUTPUT = 9
    LINEAR_WEIGHT = 10
    LINEAR_BIAS = 11
    ACTIVATION_INPUT = 12
    ACTIVATION_OUTPUT = 13


@dataclass
class TensorFile:
    """Decoded tensor fixture: payload plus layout metadata."""

    data: np.ndarray
    tag: LayoutTag
    k: int


def write_tensor(path, arr: np.ndarray, tag: LayoutTag = LayoutTag.GENERIC, k: int = 0) -> None:
    """Write an array in the fixture format (little-endian header + raw data).

    Fixture payloads are meant to be float32; float64 is representable so
    readers can reject it explicitly rather than misparse.
    """
    arr = np.ascontiguousarray(arr)
    code = _DTYPE_TO_CODE.get(arr.dtype)
    if code is None:
        raise ShapeMismatch(f"unsupported dtype {arr.dtype}; use float32")
    header = struct.pack(
        "<4sIIIII", _MAGIC, _VERSION, code, int(tag), k, arr.ndim
    ) + struct.pack(f"<{arr.ndim}Q", *arr.shape)
    Path(path).write_bytes(header + arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def read_tensor(path) -> TensorFile:
    """Read a tensor fixture; raises ShapeMismatch on malformed files."""
    raw = Path(path).read_bytes()
    head = struct.calcsize("<4sIIIII")
    if len(raw) < head:
        raise ShapeMismatch(f"{path}: truncated tensor file")
    magic, version, dtype_code, tag, k, ndim = struct.unpack("<4sIIIII", raw[:head])
    if magic != _MAGIC:
        raise ShapeMismatch(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ShapeMismatch(f"{path}: unsupported version {version}")
    dtype = _DTYPE_CODES.get(dtype_code)
    if dtype is None:
        raise ShapeMismatch(f"{path}: unknown dtype code {dtype_code}")
    shape = struct.unpack(f"<{ndim}Q", raw[head : head + 8 * ndim])
    payload = raw[head + 8 * ndim :]
    n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
    if len(payload) != n * dtype.itemsize:
        raise ShapeMismatch(
            f"{path}: payload is {len(payload)} bytes, expected {n * dtype.itemsize}"
        )
    data = np.frombuffer(payload, dtype=dtype).reshape(shape)
    return TensorFile(data=data.copy(), tag=LayoutTag(tag), k=k)
