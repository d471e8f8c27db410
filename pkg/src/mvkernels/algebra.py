"""Real Clifford algebras Cl_g(R^k): signatures, blades, geometric product.

A basis blade is identified by a bitmask over the k generators: bit i set
means generator e_{i+1} participates in the product. Blades are stored in
ascending mask order, so for k=3 the coefficient vector reads
(1, e1, e2, e12, e3, e13, e23, e123). A multivector is any numpy array whose
last axis has length 2**k; there is no wrapper class.

Blade products follow from two relations: each generator squares to its
metric value, and distinct generators anticommute. All sign and metric
bookkeeping here is exact integer arithmetic; floating point only ever
touches multivector coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from .errors import DimensionMismatch, InvalidMetricValue, InvalidSignature


@dataclass(frozen=True)
class Signature:
    """Metric signature of a k-dimensional real Clifford algebra.

    g holds one value per generator, each in {-1, 0, +1}; a signature is
    valid only if at least one entry is non-zero. Use validate_signature to
    construct from untrusted input.
    """

    g: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.g)

    @property
    def n_blades(self) -> int:
        return 1 << len(self.g)

    def __str__(self) -> str:
        return "(" + ",".join(f"{v:+d}" for v in self.g) + ")"


def validate_signature(values: Iterable[float]) -> Signature:
    """Check metric values and build a Signature.

    Raises InvalidMetricValue for entries outside {-1, 0, +1} and
    InvalidSignature when every entry is zero (the algebra would be
    degenerate in all directions).
    """
    g = []
    for v in values:
        if v not in (-1, 0, 1):
            raise InvalidMetricValue(f"metric value {v!r} not in {{-1, 0, +1}}")
        g.append(int(v))
    if not any(g):
        raise InvalidSignature(f"signature {tuple(g)} has no non-zero element")
    return Signature(tuple(g))


def blade_label(mask: int) -> str:
    """Human-readable blade name: 0 -> '1', 0b101 -> 'e13'."""
    if mask == 0:
        return "1"
    return "e" + "".join(str(i + 1) for i in range(mask.bit_length()) if mask >> i & 1)


def _reorder_sign(i_mask: int, j_mask: int) -> int:
    """Sign from sorting the concatenated generator lists of e_I e_J.

    Counts, for every generator in J, the generators of I with a strictly
    larger index (each such pair is one transposition).
    """
    a = i_mask >> 1
    swaps = 0
    while a:
        swaps += (a & j_mask).bit_count()
        a >>= 1
    return -1 if swaps & 1 else 1


def blade_product(i_mask: int, j_mask: int, sig: Signature) -> tuple[int, int]:
    """Product of basis blades e_I * e_J as (target mask, coefficient).

    The target is always I xor J. The coefficient is the reordering sign
    times the metric value of every generator the two blades share; it is
    zero exactly when a shared generator has metric zero.
    """
    coeff = _reorder_sign(i_mask, j_mask)
    shared = i_mask & j_mask
    for bit in range(sig.k):
        if shared >> bit & 1:
            coeff *= sig.g[bit]
    return i_mask ^ j_mask, coeff


@dataclass(frozen=True, eq=False)
class BladeProductTable:
    """Dense 2^k x 2^k blade product table.

    target[i, j] is the blade mask of e_I e_J (always i xor j) and
    coeff[i, j] its integer coefficient in {-1, 0, +1}. Arrays are
    read-only; tables are shared via a cache.
    """

    sig: Signature
    target: np.ndarray
    coeff: np.ndarray


@lru_cache(maxsize=None)
def product_table(sig: Signature) -> BladeProductTable:
    """Build (and cache) the blade product table for a signature."""
    nb = sig.n_blades
    target = np.empty((nb, nb), dtype=np.int64)
    coeff = np.empty((nb, nb), dtype=np.int64)
    for i in range(nb):
        for j in range(nb):
            t, c = blade_product(i, j, sig)
            target[i, j] = t
            coeff[i, j] = c
    target.flags.writeable = False
    coeff.flags.writeable = False
    return BladeProductTable(sig, target, coeff)


@lru_cache(maxsize=None)
def cayley_tensor(sig: Signature) -> np.ndarray:
    """Structure tensor C with C[i, j, t] = coefficient of blade t in e_I e_J.

    Exactly one t per (i, j) can be non-zero (t = i xor j), so contracting
    x_i C_ijt y_j computes the geometric product of coefficient vectors.
    """
    table = product_table(sig)
    nb = sig.n_blades
    cay = np.zeros((nb, nb, nb), dtype=np.float64)
    ii, jj = np.meshgrid(np.arange(nb), np.arange(nb), indexing="ij")
    cay[ii, jj, table.target] = table.coeff
    cay.flags.writeable = False
    return cay


def _check_blade_axis(name: str, arr: np.ndarray, nb: int) -> None:
    if arr.ndim == 0 or arr.shape[-1] != nb:
        raise DimensionMismatch(
            f"{name} has blade axis {arr.shape[-1] if arr.ndim else '()'}, expected {nb}"
        )


def geometric_product(x, y, table: BladeProductTable) -> np.ndarray:
    """Geometric product of multivectors, broadcasting over leading axes.

    Accumulates in double precision and rounds back to the operands' common
    dtype, so single-precision callers get a correctly-rounded result.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    nb = table.sig.n_blades
    _check_blade_axis("x", x, nb)
    _check_blade_axis("y", y, nb)
    out_dtype = np.result_type(x.dtype, y.dtype)
    res = np.einsum(
        "...i,ijt,...j->...t",
        x.astype(np.float64, copy=False),
        cayley_tensor(table.sig),
        y.astype(np.float64, copy=False),
    )
    return res.astype(out_dtype, copy=False)


def multivector_add(x, y) -> np.ndarray:
    """Element-wise multivector sum; operands must agree on blade count."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape[-1] != y.shape[-1]:
        raise DimensionMismatch(
            f"blade counts differ: {x.shape[-1]} vs {y.shape[-1]}"
        )
    return x + y


def basis_blade(mask: int, sig: Signature, dtype=np.float64) -> np.ndarray:
    """Coefficient vector of a single basis blade e_I."""
    v = np.zeros(sig.n_blades, dtype=dtype)
    v[mask] = 1.0
    return v


def all_valid_signatures(k_max: int = 3) -> list[Signature]:
    """Every valid signature with 1 <= k <= k_max (36 of them for k_max=3)."""
    from itertools import product as iproduct

    sigs = []
    for k in range(1, k_max + 1):
        for g in iproduct((-1, 0, 1), repeat=k):
            if any(g):
                sigs.append(Signature(g))
    return sigs
