"""Clifford linear layer: reference form and the blade-pair GEMM form.

The reference applies Alg-style semantics directly: out[b, c_out] =
bias[c_out] + sum_{c_in} weight[c_in, c_out] * input[b, c_in] with * the
geometric product (weight first). The optimized form transposes the input
to blade-major once, then runs one real (B x C_in) @ (C_in x C_out) matrix
product per surviving schedule term -- no expanded kernel, no duplicated
weights. Zero-metric signatures simply run fewer GEMMs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import Signature, cayley_tensor
from .errors import ShapeMismatch
from .specialize import OpSchedule, schedule_flop_count, schedule_for


@dataclass(frozen=True, eq=False)
class LinearLayer:
    sig: Signature
    C_in: int
    C_out: int
    weight: np.ndarray  # (N_B, C_out, C_in) float32
    bias: np.ndarray  # (N_B, C_out) float32
    schedule: OpSchedule


def make_linear_layer(sig: Signature, weight: np.ndarray, bias: np.ndarray) -> LinearLayer:
    if not 1 <= sig.k <= 3:
        raise ShapeMismatch(f"linear layer supports k in {{1,2,3}}, got k={sig.k}")
    weight = np.asarray(weight)
    bias = np.asarray(bias)
    nb = sig.n_blades
    if weight.ndim != 3 or weight.shape[0] != nb:
        raise ShapeMismatch(f"weight shape {weight.shape}, expected (N_B={nb}, C_out, C_in)")
    _, c_out, c_in = weight.shape
    if bias.shape != (nb, c_out):
        raise ShapeMismatch(f"bias shape {bias.shape}, expected {(nb, c_out)}")
    weight = np.array(weight, dtype=np.float32, order="C", copy=True)
    bias = np.array(bias, dtype=np.float32, order="C", copy=True)
    weight.flags.writeable = False
    bias.flags.writeable = False
    return LinearLayer(sig, c_in, c_out, weight, bias, schedule_for(sig))


def _check_input(x: np.ndarray, layer: LinearLayer) -> None:
    nb = layer.sig.n_blades
    if x.ndim != 3 or x.shape[1] != layer.C_in or x.shape[2] != nb:
        raise ShapeMismatch(
            f"input shape {x.shape}, expected (B, {layer.C_in}, {nb})"
        )


def linear_reference(x: np.ndarray, layer: LinearLayer) -> np.ndarray:
    """Double-precision oracle for the Clifford linear map."""
    _check_input(x, layer)
    cay = cayley_tensor(layer.sig)
    out = np.einsum(
        "imc,ijt,bcj->bmt",
        layer.weight.astype(np.float64),
        cay,
        x.astype(np.float64),
        optimize=True,
    )
    out += layer.bias.T.astype(np.float64)[None, :, :]
    return out.astype(np.float32)


def linear_blade_gemm(x: np.ndarray, layer: LinearLayer) -> np.ndarray:
    """One real GEMM per schedule term, blade-major data, no kernel build.

    The input is transposed to (N_B, B, C_in) once (counted as overhead in
    benchmarks); each term then reads one input blade plane and one weight
    blade plane and accumulates into one output blade plane.
    """
    _check_input(x, layer)
    x = np.ascontiguousarray(x, dtype=np.float32)
    nb = layer.sig.n_blades
    B = x.shape[0]
    xt = np.ascontiguousarray(x.transpose(2, 0, 1))  # (N_B, B, C_in)
    out_t = np.zeros((nb, B, layer.C_out), dtype=np.float32)
    for t in layer.schedule.terms:
        prod = xt[t.b_blade] @ layer.weight[t.a_blade].T  # (B, C_out)
        if t.negate:
            out_t[t.out_blade] -= prod
        else:
            out_t[t.out_blade] += prod
    out = np.ascontiguousarray(out_t.transpose(1, 2, 0))  # (B, C_out, N_B)
    out += layer.bias.T[None, :, :]
    return out


def linear_forward(x: np.ndarray, layer: LinearLayer, variant: str = "gemm") -> np.ndarray:
    if variant == "reference":
        return linear_reference(x, layer)
    if variant == "gemm":
        return linear_blade_gemm(x, layer)
    raise ValueError(f"unknown linear variant {variant!r}")


def linear_flops(B: int, C_in: int, C_out: int, schedule: OpSchedule) -> int:
    """FLOPs of one forward pass: schedule products plus bias adds."""
    return B * C_out * (C_in * schedule_flop_count(schedule) + schedule.sig.n_blades)
