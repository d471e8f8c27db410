"""Multivector activation layer: gated scaling with an optimization ladder.

A scalar gate is computed per (batch, channel) from a subset of input
blades -- weighted sum (Linear), plain sum (Sum), or average (Mean) -- and
sigmoid(gate) uniformly scales the whole multivector.

Ladder of implementations, all matching within 1e-5 absolute:

reference    faithful baseline loop nest; recomputes the gate for every
             output blade (the documented inefficiency is preserved on
             purpose so ladder speedups stay measurable)
hoisted      gate computed once per (b, c); dual-accumulator reduction
packed       gathers kernel blades into a dense v_pack first, then works
             on channel blocks of eight with a tail path
specialized  branch-free per-mode, per-N_B kernels, channel block of eight
             fully unrolled; requires K == N_B in {4, 8} and C % 8 == 0
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np
from numba import njit

from .algebra import Signature
from .errors import (
    IndexOutOfRange,
    ModeConfigMismatch,
    ShapeMismatch,
    SpecializationPreconditionViolated,
)


class AggMode(IntEnum):
    """Gate aggregation mode; values are part of the FFI contract."""

    LINEAR = 0
    SUM = 1
    MEAN = 2


@dataclass(frozen=True, eq=False)
class ActivationConfig:
    sig: Signature
    agg_mode: AggMode
    kernel_indices: tuple[int, ...]
    weight: np.ndarray | None = None  # (C, K), Linear only
    bias: np.ndarray | None = None  # (C,), Linear only

    @property
    def K(self) -> int:
        return len(self.kernel_indices)


def make_activation_config(
    sig: Signature,
    agg_mode: AggMode | int,
    kernel_indices,
    weight=None,
    bias=None,
) -> ActivationConfig:
    agg_mode = AggMode(agg_mode)
    ki = tuple(int(i) for i in kernel_indices)
    nb = sig.n_blades
    if len(set(ki)) != len(ki):
        raise IndexOutOfRange(f"kernel indices {ki} contain duplicates")
    if not ki or any(i < 0 or i >= nb for i in ki):
        raise IndexOutOfRange(f"kernel indices {ki} outside [0, {nb})")
    if agg_mode == AggMode.LINEAR:
        if weight is None or bias is None:
            raise ModeConfigMismatch("Linear mode requires weight and bias")
        weight = np.array(weight, dtype=np.float32, order="C", copy=True)
        bias = np.array(bias, dtype=np.float32, order="C", copy=True)
        if weight.ndim != 2 or weight.shape[1] != len(ki):
            raise ShapeMismatch(
                f"weight shape {weight.shape}, expected (C, K={len(ki)})"
            )
        if bias.shape != (weight.shape[0],):
            raise ShapeMismatch(
                f"bias shape {bias.shape}, expected ({weight.shape[0]},)"
            )
        weight.flags.writeable = False
        bias.flags.writeable = False
    else:
        if weight is not None or bias is not None:
            raise ModeConfigMismatch(f"{agg_mode.name} mode forbids weight/bias")
    return ActivationConfig(sig, agg_mode, ki, weight, bias)


def sigmoid(s):
    """Logistic function 1 / (1 + exp(-s)); saturates cleanly in both tails."""
    s = np.asarray(s)
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-s))


def gather_vpack(x: np.ndarray, cfg: ActivationConfig) -> np.ndarray:
    """Gather the kernel blades into a dense contiguous (B, C, K) tensor."""
    if x.ndim != 3:
        raise ShapeMismatch(f"input shape {x.shape}, expected (B, C, N_B)")
    if any(i >= x.shape[2] for i in cfg.kernel_indices):
        raise IndexOutOfRange(
            f"kernel indices {cfg.kernel_indices} outside [0, {x.shape[2]})"
        )
    return np.ascontiguousarray(x[:, :, list(cfg.kernel_indices)], dtype=np.float32)


def gate_preactivation(x: np.ndarray, cfg: ActivationConfig) -> np.ndarray:
    """The pre-sigmoid scalar s per (b, c) -- exposed for property checks."""
    vp = gather_vpack(x, cfg)
    if cfg.agg_mode == AggMode.LINEAR:
        return (vp * cfg.weight[None, :, :]).sum(axis=2) + cfg.bias[None, :]
    if cfg.agg_mode == AggMode.SUM:
        return vp.sum(axis=2)
    return vp.mean(axis=2)


def _check_x(x: np.ndarray, cfg: ActivationConfig) -> np.ndarray:
    if x.ndim != 3 or x.shape[2] != cfg.sig.n_blades:
        raise ShapeMismatch(
            f"input shape {x.shape}, expected (B, C, {cfg.sig.n_blades})"
        )
    if cfg.agg_mode == AggMode.LINEAR and cfg.weight.shape[0] != x.shape[1]:
        raise ShapeMismatch(
            f"weight is for C={cfg.weight.shape[0]} channels, input has C={x.shape[1]}"
        )
    return np.ascontiguousarray(x, dtype=np.float32)


def _kernel_args(cfg: ActivationConfig):
    ki = np.array(cfg.kernel_indices, dtype=np.int64)
    if cfg.agg_mode == AggMode.LINEAR:
        weight, bias = cfg.weight, cfg.bias
    else:
        weight = np.zeros((1, 1), dtype=np.float32)
        bias = np.zeros(1, dtype=np.float32)
    return ki, weight, bias, int(cfg.agg_mode), np.float32(cfg.K)


@njit(cache=True, fastmath=True)
def _act_reference_kernel(x, ki, weight, bias, out, mode, kf):
    # Faithful baseline: the gate is recomputed inside the blade loop, and
    # kernel blades go through the indirection array every time.
    B, C, NB = x.shape
    K = ki.shape[0]
    one = np.float32(1.0)
    for b in range(B):
        for c in range(C):
            for j in range(NB):
                s = np.float32(0.0)
                if mode == 0:
                    for k in range(K):
                        s += x[b, c, ki[k]] * weight[c, k]
                    s += bias[c]
                else:
                    for k in range(K):
                        s += x[b, c, ki[k]]
                    if mode == 2:
                        s = s / kf
                out[b, c, j] = x[b, c, j] * (one / (one + np.exp(-s)))


@njit(cache=True, fastmath=True)
def _act_hoisted_kernel(x, ki, weight, bias, out, mode, kf):
    # Gate hoisted out of the blade loop; dual accumulators over K.
    B, C, NB = x.shape
    K = ki.shape[0]
    one = np.float32(1.0)
    for b in range(B):
        for c in range(C):
            s0 = np.float32(0.0)
            s1 = np.float32(0.0)
            k = 0
            if mode == 0:
                while k + 1 < K:
                    s0 += x[b, c, ki[k]] * weight[c, k]
                    s1 += x[b, c, ki[k + 1]] * weight[c, k + 1]
                    k += 2
                if k < K:
                    s0 += x[b, c, ki[k]] * weight[c, k]
                s = s0 + s1 + bias[c]
            else:
                while k + 1 < K:
                    s0 += x[b, c, ki[k]]
                    s1 += x[b, c, ki[k + 1]]
                    k += 2
                if k < K:
                    s0 += x[b, c, ki[k]]
                s = s0 + s1
                if mode == 2:
                    s = s / kf
            g = one / (one + np.exp(-s))
            for j in range(NB):
                out[b, c, j] = x[b, c, j] * g


@njit(cache=True, fastmath=True)
def _act_packed_kernel(x, vpack, weight, bias, out, mode, kf):
    # Dense unit-stride v_pack reduction, channels in blocks of eight with
    # a scalar tail; gates for a block go through one sigmoid sweep.
    B, C, NB = x.shape
    K = vpack.shape[2]
    one = np.float32(1.0)
    svec = np.empty(8, dtype=np.float32)
    for b in range(B):
        c0 = 0
        while c0 + 8 <= C:
            for cc in range(8):
                c = c0 + cc
                s = np.float32(0.0)
                if mode == 0:
                    for k in range(K):
                        s += vpack[b, c, k] * weight[c, k]
                    s += bias[c]
                else:
                    for k in range(K):
                        s += vpack[b, c, k]
                    if mode == 2:
                        s = s / kf
                svec[cc] = s
            for cc in range(8):
                svec[cc] = one / (one + np.exp(-svec[cc]))
            for cc in range(8):
                c = c0 + cc
                g = svec[cc]
                for j in range(NB):
                    out[b, c, j] = x[b, c, j] * g
            c0 += 8
        for c in range(c0, C):
            s = np.float32(0.0)
            if mode == 0:
                for k in range(K):
                    s += vpack[b, c, k] * weight[c, k]
                s += bias[c]
            else:
                for k in range(K):
                    s += vpack[b, c, k]
                if mode == 2:
                    s = s / kf
            g = one / (one + np.exp(-s))
            for j in range(NB):
                out[b, c, j] = x[b, c, j] * g


def _build_specialized(mode: int, nb: int):
    """Branch-free kernel for one (mode, blade count): all blades feed the
    gate, the channel block of eight is fully unrolled in SSA style, and
    numba freezes mode/nb so no branching survives into the loop body."""

    @njit(cache=False, fastmath=True)
    def kern(x, weight, bias, out):
        B = x.shape[0]
        C = x.shape[1]
        one = np.float32(1.0)
        kf = np.float32(nb)
        for b in range(B):
            for c0 in range(0, C, 8):
                s0 = np.float32(0.0)
                s1 = np.float32(0.0)
                s2 = np.float32(0.0)
                s3 = np.float32(0.0)
                s4 = np.float32(0.0)
                s5 = np.float32(0.0)
                s6 = np.float32(0.0)
                s7 = np.float32(0.0)
                if mode == 0:
                    for k in range(nb):
                        s0 += x[b, c0, k] * weight[c0, k]
                        s1 += x[b, c0 + 1, k] * weight[c0 + 1, k]
                        s2 += x[b, c0 + 2, k] * weight[c0 + 2, k]
                        s3 += x[b, c0 + 3, k] * weight[c0 + 3, k]
                        s4 += x[b, c0 + 4, k] * weight[c0 + 4, k]
                        s5 += x[b, c0 + 5, k] * weight[c0 + 5, k]
                        s6 += x[b, c0 + 6, k] * weight[c0 + 6, k]
                        s7 += x[b, c0 + 7, k] * weight[c0 + 7, k]
                    s0 += bias[c0]
                    s1 += bias[c0 + 1]
                    s2 += bias[c0 + 2]
                    s3 += bias[c0 + 3]
                    s4 += bias[c0 + 4]
                    s5 += bias[c0 + 5]
                    s6 += bias[c0 + 6]
                    s7 += bias[c0 + 7]
                else:
                    for k in range(nb):
                        s0 += x[b, c0, k]
                        s1 += x[b, c0 + 1, k]
                        s2 += x[b, c0 + 2, k]
                        s3 += x[b, c0 + 3, k]
                        s4 += x[b, c0 + 4, k]
                        s5 += x[b, c0 + 5, k]
                        s6 += x[b, c0 + 6, k]
                        s7 += x[b, c0 + 7, k]
                    if mode == 2:
                        s0 = s0 / kf
                        s1 = s1 / kf
                        s2 = s2 / kf
                        s3 = s3 / kf
                        s4 = s4 / kf
                        s5 = s5 / kf
                        s6 = s6 / kf
                        s7 = s7 / kf
                g0 = one / (one + np.exp(-s0))
                g1 = one / (one + np.exp(-s1))
                g2 = one / (one + np.exp(-s2))
                g3 = one / (one + np.exp(-s3))
                g4 = one / (one + np.exp(-s4))
                g5 = one / (one + np.exp(-s5))
                g6 = one / (one + np.exp(-s6))
                g7 = one / (one + np.exp(-s7))
                for j in range(nb):
                    out[b, c0, j] = x[b, c0, j] * g0
                    out[b, c0 + 1, j] = x[b, c0 + 1, j] * g1
                    out[b, c0 + 2, j] = x[b, c0 + 2, j] * g2
                    out[b, c0 + 3, j] = x[b, c0 + 3, j] * g3
                    out[b, c0 + 4, j] = x[b, c0 + 4, j] * g4
                    out[b, c0 + 5, j] = x[b, c0 + 5, j] * g5
                    out[b, c0 + 6, j] = x[b, c0 + 6, j] * g6
                    out[b, c0 + 7, j] = x[b, c0 + 7, j] * g7

    return kern


_SPECIALIZED_CACHE: dict[tuple[int, int], object] = {}


def _specialized_kernel(mode: int, nb: int):
    key = (mode, nb)
    fn = _SPECIALIZED_CACHE.get(key)
    if fn is None:
        fn = _build_specialized(mode, nb)
        _SPECIALIZED_CACHE[key] = fn
    return fn


def activation_reference(x: np.ndarray, cfg: ActivationConfig) -> np.ndarray:
    """Faithful baseline semantics (and the ladder's correctness oracle)."""
    x = _check_x(x, cfg)
    out = np.empty_like(x)
    ki, weight, bias, mode, kf = _kernel_args(cfg)
    _act_reference_kernel(x, ki, weight, bias, out, mode, kf)
    return out


def activation_hoisted(x: np.ndarray, cfg: ActivationConfig) -> np.ndarray:
    x = _check_x(x, cfg)
    out = np.empty_like(x)
    ki, weight, bias, mode, kf = _kernel_args(cfg)
    _act_hoisted_kernel(x, ki, weight, bias, out, mode, kf)
    return out


def activation_packed(
    x: np.ndarray, vpack: np.ndarray | None, cfg: ActivationConfig
) -> np.ndarray:
    """Vectorizable path over the dense v_pack; handles any C and K <= N_B."""
    x = _check_x(x, cfg)
    if vpack is None:
        vpack = gather_vpack(x, cfg)
    expected = (x.shape[0], x.shape[1], cfg.K)
    if vpack.shape != expected:
        raise ShapeMismatch(f"v_pack shape {vpack.shape}, expected {expected}")
    out = np.empty_like(x)
    _, weight, bias, mode, kf = _kernel_args(cfg)
    _act_packed_kernel(x, vpack, weight, bias, out, mode, kf)
    return out


def activation_specialized(x: np.ndarray, cfg: ActivationConfig) -> np.ndarray:
    """Fast path under the default-use assumptions; rejects anything else so
    callers fall back to activation_packed explicitly."""
    x = _check_x(x, cfg)
    nb = cfg.sig.n_blades
    C = x.shape[1]
    if cfg.K != nb or nb not in (4, 8):
        raise SpecializationPreconditionViolated(
            f"specialized path needs K == N_B in {{4, 8}}, got K={cfg.K}, N_B={nb}"
        )
    if C % 8 != 0:
        raise SpecializationPreconditionViolated(
            f"specialized path needs C divisible by 8, got C={C}"
        )
    if cfg.agg_mode == AggMode.LINEAR:
        # Weight column k pairs with blade kernel_indices[k]; re-key columns
        # to blade order once so the kernel can scan blades contiguously.
        weight = np.zeros((C, nb), dtype=np.float32)
        weight[:, list(cfg.kernel_indices)] = cfg.weight
        bias = cfg.bias
    else:
        weight = np.zeros((1, 1), dtype=np.float32)
        bias = np.zeros(1, dtype=np.float32)
    out = np.empty_like(x)
    kern = _specialized_kernel(int(cfg.agg_mode), nb)
    kern(x, weight, bias, out)
    return out


def activation_forward(
    x: np.ndarray, cfg: ActivationConfig, variant: str = "specialized"
) -> np.ndarray:
    """Dispatch helper; 'specialized' silently falls back to 'packed' when
    its preconditions do not hold."""
    if variant == "reference":
        return activation_reference(x, cfg)
    if variant == "hoisted":
        return activation_hoisted(x, cfg)
    if variant == "packed":
        return activation_packed(x, None, cfg)
    if variant == "specialized":
        try:
            return activation_specialized(x, cfg)
        except SpecializationPreconditionViolated:
            return activation_packed(x, None, cfg)
    raise ValueError(f"unknown activation variant {variant!r}")


def activation_flops(
    B: int, C: int, n_blades: int, K: int, mode: AggMode | int, sigmoid_cost: int = 30
) -> int:
    """Cost model, counted from the hoisted form (one gate per (b, c)).

    sigmoid_cost is the fixed FLOP equivalent charged per sigmoid call.
    """
    mode = AggMode(mode)
    if mode == AggMode.LINEAR:
        per_bc = 2 * K + 1 + sigmoid_cost + n_blades
    elif mode == AggMode.SUM:
        per_bc = K - 1 + sigmoid_cost + n_blades
    else:
        per_bc = K - 1 + 1 + sigmoid_cost + n_blades
    return B * C * per_bc
