"""k-D Clifford convolution (k in {1,2,3}) in three implementations.

reference    direct multivector loop semantics, double-precision oracle
kernelized   expanded real kernel (N_B x data duplication) + naive real
             cross-correlation, the baseline formulation
packed       packed layouts + signature-specialized FMA schedule, either
             schedule-driven or as a generated fully-unrolled kernel

All variants compute valid cross-correlation: out[p] sums filter[q] *
input[p+q] with the geometric product taken filter-element first. Layer
kernels run in single precision; only the reference accumulates in double.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .algebra import Signature, cayley_tensor
from .errors import BatchNotDivisible, ShapeMismatch
from .layout import (
    Dims,
    gather_index_table,
    pack_filters,
    pack_input,
    spatial_coords,
    unpack_output,
)
from .specialize import (
    OpSchedule,
    fma_lines,
    schedule_arrays,
    schedule_flop_count,
    schedule_for,
)

ENV_VECTOR_WIDTH = "MVKERNELS_VECTOR_WIDTH"


@lru_cache(maxsize=1)
def _cpu_has_avx2() -> bool:
    try:
        with open("/proc/cpuinfo", "r", encoding="utf-8") as fh:
            for line in fh:
                if line.lower().startswith("flags"):
                    return "avx2" in line.split(":")[1].split()
    except OSError:
        pass
    return False


def default_vector_width() -> int:
    """Single-precision lanes per vector op: 8 with 256-bit vectors, else 1.

    Overridable through the MVKERNELS_VECTOR_WIDTH environment variable.
    """
    env = os.environ.get(ENV_VECTOR_WIDTH)
    if env:
        w = int(env)
        if w < 1:
            raise ValueError(f"{ENV_VECTOR_WIDTH} must be >= 1, got {w}")
        return w
    return 8 if _cpu_has_avx2() else 1


def _f32(arr) -> np.ndarray:
    """Private float32 C-order copy, frozen against later mutation."""
    out = np.array(arr, dtype=np.float32, order="C", copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class ConvLayer:
    """Immutable convolution layer: parameters plus resolved kernel inputs.

    Signature dispatch happens here, once: the FMA schedule, the packed
    filter copy and the spatial gather table are all fixed at construction
    so forward calls stay branch-free.
    """

    dims: Dims
    sig: Signature
    filters: np.ndarray  # (N_B, C_in, C_out, d_filter^k) float32
    bias: np.ndarray  # (N_B, C_out) float32
    schedule: OpSchedule
    W: int
    U: int
    packed_filters: np.ndarray = field(repr=False)
    in_index: np.ndarray = field(repr=False)

    @property
    def L(self) -> int:
        return self.W * self.U


def make_conv_layer(
    dims: Dims,
    sig: Signature,
    filters: np.ndarray,
    bias: np.ndarray,
    W: int | None = None,
    U: int = 1,
) -> ConvLayer:
    """Validate shapes, fix kernel parameters, and freeze the layer."""
    if sig.k != dims.k:
        raise ShapeMismatch(f"signature k={sig.k} does not match dims k={dims.k}")
    if not 1 <= dims.k <= 3:
        raise ShapeMismatch(f"convolution supports k in {{1,2,3}}, got k={dims.k}")
    filters = np.asarray(filters)
    bias = np.asarray(bias)
    if filters.shape != dims.filters_shape():
        raise ShapeMismatch(
            f"filters shape {filters.shape}, expected {dims.filters_shape()}"
        )
    if bias.shape != dims.bias_shape():
        raise ShapeMismatch(f"bias shape {bias.shape}, expected {dims.bias_shape()}")
    if W is None:
        W = default_vector_width()
    if W < 1 or U < 1:
        raise ShapeMismatch(f"W and U must be >= 1, got W={W} U={U}")
    filters = _f32(filters)
    bias = _f32(bias)
    pf = pack_filters(filters, dims)
    pf.flags.writeable = False
    return ConvLayer(
        dims=dims,
        sig=sig,
        filters=filters,
        bias=bias,
        schedule=schedule_for(sig),
        W=W,
        U=U,
        packed_filters=pf,
        in_index=gather_index_table(dims),
    )


def _check_input(x: np.ndarray, dims: Dims) -> None:
    if x.shape != dims.input_shape():
        raise ShapeMismatch(f"input shape {x.shape}, expected {dims.input_shape()}")


# --- reference ---------------------------------------------------------------


def conv_reference(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Direct multivector convolution, accumulated in double precision.

    out[b, c_out, p] = bias[c_out] + sum_{c_in, q} filters[c_in, c_out, q] *
    input[b, c_in, p+q] with * the geometric product. This is the oracle the
    optimized paths are checked against.
    """
    dims = layer.dims
    _check_input(x, dims)
    cay = cayley_tensor(layer.sig)
    nb = dims.n_blades
    xs = x.reshape(dims.B, dims.C_in, *([dims.d_image] * dims.k), nb)
    xs = xs.astype(np.float64)
    f = layer.filters.astype(np.float64)
    out = np.zeros(
        (dims.B, dims.C_out) + (dims.d_out,) * dims.k + (nb,), dtype=np.float64
    )
    for qi, qc in enumerate(spatial_coords(dims.d_filter, dims.k)):
        window = xs[
            (slice(None), slice(None))
            + tuple(slice(int(c), int(c) + dims.d_out) for c in qc)
            + (slice(None),)
        ]
        out += np.einsum(
            "icm,ijt,bc...j->bm...t", f[..., qi], cay, window, optimize=True
        )
    out += layer.bias.T.astype(np.float64).reshape(
        (1, dims.C_out) + (1,) * dims.k + (nb,)
    )
    return (
        out.reshape(dims.output_shape()).astype(np.float32)
    )


# --- expanded-kernel baseline ------------------------------------------------


def build_expanded_kernel(layer: ConvLayer) -> np.ndarray:
    """Materialize the real-valued kernel of shape (C_out*N_B, C_in*N_B, Q).

    entry[(c_out, t), (c_in, j), q] is the coefficient with which input
    blade j feeds output blade t: the (single) filter blade i = t xor j
    signed by the product table. The result duplicates every filter value
    N_B times, which is exactly the baseline's memory defect.
    """
    dims = layer.dims
    nb = dims.n_blades
    cay = cayley_tensor(layer.sig).astype(np.float32)
    kern = np.einsum("icmq,ijt->mtcjq", layer.filters, cay, optimize=True)
    return np.ascontiguousarray(
        kern.reshape(dims.C_out * nb, dims.C_in * nb, dims.filter_positions)
    )


@njit(cache=True, fastmath=True)
def _real_conv_kernel(xf, kern, bias_flat, out, in_index):
    # Naive real-valued cross-correlation over the flattened blade-channels:
    # a direct translation of the baseline loop nest, no blade awareness.
    B, CI, _ = xf.shape
    CO = kern.shape[0]
    Q = kern.shape[2]
    P_out = in_index.shape[0]
    for b in range(B):
        for co in range(CO):
            for o in range(P_out):
                acc = bias_flat[co]
                for ci in range(CI):
                    for q in range(Q):
                        acc += kern[co, ci, q] * xf[b, ci, in_index[o, q]]
                out[b, co, o] = acc


def conv_kernelized(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    """Baseline: expanded kernel + real convolution + output rearrangement."""
    dims = layer.dims
    _check_input(x, dims)
    nb = dims.n_blades
    x = np.ascontiguousarray(x, dtype=np.float32)
    # (B, C_in, p, blade) -> (B, C_in*N_B, p), channel-major blade-minor
    xf = np.ascontiguousarray(x.transpose(0, 1, 3, 2)).reshape(
        dims.B, dims.C_in * nb, dims.in_positions
    )
    kern = build_expanded_kernel(layer)
    bias_flat = np.ascontiguousarray(layer.bias.T).reshape(dims.C_out * nb)
    out_flat = np.empty(
        (dims.B, dims.C_out * nb, dims.out_positions), dtype=np.float32
    )
    _real_conv_kernel(xf, kern, bias_flat, out_flat, layer.in_index)
    out = out_flat.reshape(dims.B, dims.C_out, nb, dims.out_positions)
    return np.ascontiguousarray(out.transpose(0, 1, 3, 2))


# --- packed / specialized ----------------------------------------------------


@njit(cache=True, fastmath=True)
def _packed_conv_generic(xp, fp, bias, out, in_index, ob, ab, bb, sg):
    # Schedule-driven packed kernel. One (N_B, L) accumulator block lives
    # across the whole position loop; no allocation inside it.
    C_in = xp.shape[0]
    NB = xp.shape[3]
    L = xp.shape[4]
    C_out = out.shape[0]
    P_out, Q = in_index.shape
    G = xp.shape[2]
    n_terms = ob.shape[0]
    acc = np.empty((NB, L), dtype=np.float32)
    for co in range(C_out):
        for o in range(P_out):
            for g in range(G):
                for t in range(NB):
                    bv = bias[t, co]
                    for l in range(L):
                        acc[t, l] = bv
                for ci in range(C_in):
                    for q in range(Q):
                        p = in_index[o, q]
                        for s in range(n_terms):
                            fv = sg[s] * fp[ci, co, q, ab[s]]
                            tb = ob[s]
                            jb = bb[s]
                            for l in range(L):
                                acc[tb, l] += fv * xp[ci, p, g, jb, l]
                for t in range(NB):
                    for l in range(L):
                        out[co, o, g, t, l] = acc[t, l]


def _packed_conv_source(schedule: OpSchedule, L: int) -> str:
    """Source of a fully-unrolled packed kernel for one (signature, L).

    Blade indices and the package length are literals, and the whole
    (N_B, L) accumulator block lives in scalar SSA variables, so nothing in
    the inner chain can alias and the FMA groups stay register-resident.
    One straight-line multiply-accumulate chain per (output blade, lane).
    """
    nb = schedule.sig.n_blades
    lines = [
        "def kernel(xp, fp, bias, out, in_index):",
        "    C_in = xp.shape[0]",
        "    G = xp.shape[2]",
        "    C_out = out.shape[0]",
        "    P_out = in_index.shape[0]",
        "    Q = in_index.shape[1]",
        "    for co in range(C_out):",
        "        for o in range(P_out):",
        "            for g in range(G):",
    ]
    for t in range(nb):
        lines.append(f"                bv{t} = bias[{t}, co]")
    for t in range(nb):
        for l in range(L):
            lines.append(f"                a{t}_{l} = bv{t}")
    lines += [
        "                for ci in range(C_in):",
        "                    for q in range(Q):",
        "                        p = in_index[o, q]",
        "                        xb = xp[ci, p, g]",
        "                        fb = fp[ci, co, q]",
    ]
    for i in range(nb):
        lines.append(f"                        f{i} = fb[{i}]")
    for l in range(L):
        for stmt in fma_lines(
            schedule, f"a{{0}}_{l}", "f{0}", f"xb[{{0}}, {l}]"
        ):
            lines.append(f"                        {stmt}")
    lines.append("                ob = out[co, o, g]")
    for t in range(nb):
        for l in range(L):
            lines.append(f"                ob[{t}, {l}] = a{t}_{l}")
    return "\n".join(lines) + "\n"


_UNROLLED_CACHE: dict[tuple[tuple[int, ...], int], object] = {}


def _unrolled_packed_kernel(schedule: OpSchedule, L: int):
    key = (schedule.sig.g, L)
    fn = _UNROLLED_CACHE.get(key)
    if fn is None:
        src = _packed_conv_source(schedule, L)
        ns = {"np": np}
        exec(compile(src, f"<packed kernel {schedule.sig} L={L}>", "exec"), ns)
        fn = njit(cache=False, fastmath=True)(ns["kernel"])
        _UNROLLED_CACHE[key] = fn
    return fn


def conv_packed(xp: np.ndarray, layer: ConvLayer, unrolled: bool = False) -> np.ndarray:
    """Packed-layout convolution under the signature-specialized schedule.

    Expects input packed with the layer's package length L and returns the
    packed output; unrolled=True dispatches to the generated per-signature
    kernel instead of the schedule-driven one (identical results).
    """
    dims = layer.dims
    L = layer.L
    if dims.B % L != 0:
        raise BatchNotDivisible(dims.B, L)
    nb = dims.n_blades
    expected = (dims.C_in, dims.in_positions, dims.B // L, nb, L)
    if xp.shape != expected:
        raise ShapeMismatch(f"packed input shape {xp.shape}, expected {expected}")
    if xp.dtype != np.float32:
        raise ShapeMismatch(f"packed input dtype {xp.dtype}, expected float32")
    out = np.empty(
        (dims.C_out, dims.out_positions, dims.B // L, nb, L), dtype=np.float32
    )
    if unrolled:
        kern = _unrolled_packed_kernel(layer.schedule, L)
        kern(xp, layer.packed_filters, layer.bias, out, layer.in_index)
    else:
        ob, ab, bb, sg = schedule_arrays(layer.schedule)
        _packed_conv_generic(
            xp, layer.packed_filters, layer.bias, out, layer.in_index, ob, ab, bb, sg
        )
    return out


def conv_forward(x: np.ndarray, layer: ConvLayer, variant: str = "packed") -> np.ndarray:
    """Protocol-to-protocol forward pass through the chosen implementation."""
    if variant == "reference":
        return conv_reference(x, layer)
    if variant == "kernelized":
        return conv_kernelized(x, layer)
    if variant in ("packed", "specialized"):
        xp = pack_input(np.ascontiguousarray(x, dtype=np.float32), layer.dims, layer.L)
        yp = conv_packed(xp, layer, unrolled=(variant == "specialized"))
        return unpack_output(yp, layer.dims, layer.L)
    raise ValueError(f"unknown conv variant {variant!r}")


def conv_flops(dims: Dims, schedule: OpSchedule) -> int:
    """FLOPs of one forward pass: products via the schedule plus bias adds."""
    per_position = dims.C_in * dims.filter_positions * schedule_flop_count(schedule)
    return dims.B * dims.C_out * dims.out_positions * (per_position + dims.n_blades)
