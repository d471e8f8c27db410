"""Signature-specialized execution schedules for the geometric product.

Every non-zero entry of a blade product table becomes one fused
multiply-add term; entries killed by a zero metric disappear entirely, and
each surviving sign is folded into an add-vs-subtract choice. Nothing else
remains: a schedule is a flat list of FMA terms.

The schedule is the semantic source of truth for all optimized kernels.
Generated kernel sources (see conv/activation) are derived from it and must
agree with apply_schedule, which executes the terms directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .algebra import BladeProductTable, Signature, blade_label, product_table
from .errors import DimensionMismatch


@dataclass(frozen=True)
class FmaTerm:
    """One multiply-accumulate: out[out_blade] -+= a[a_blade] * b[b_blade]."""

    out_blade: int
    a_blade: int
    b_blade: int
    negate: bool


@dataclass(frozen=True)
class OpSchedule:
    """Ordered FMA terms for one signature.

    Terms are grouped by output blade (ascending), then by a-operand blade
    (ascending), so equal tables always produce identical schedules.
    """

    sig: Signature
    terms: tuple[FmaTerm, ...]

    def __len__(self) -> int:
        return len(self.terms)


def build_schedule(table: BladeProductTable) -> OpSchedule:
    """Turn a product table into a schedule, dropping zero terms.

    For output blade t and a-operand blade i the only b-operand that can
    contribute is t xor i, so the dense case has exactly N_B^2 terms.
    """
    nb = table.sig.n_blades
    terms = []
    for out in range(nb):
        for a in range(nb):
            b = out ^ a
            c = int(table.coeff[a, b])
            if c != 0:
                terms.append(FmaTerm(out, a, b, c < 0))
    return OpSchedule(table.sig, tuple(terms))


@lru_cache(maxsize=None)
def schedule_for(sig: Signature) -> OpSchedule:
    """Convenience: cached schedule straight from a signature."""
    return build_schedule(product_table(sig))


def schedule_flop_count(s: OpSchedule) -> int:
    """FLOPs of one product under this schedule (each FMA = multiply + add)."""
    return 2 * len(s.terms)


def schedule_arrays(s: OpSchedule):
    """Index/sign arrays (out, a, b, sign) for schedule-driven kernels."""
    ob = np.array([t.out_blade for t in s.terms], dtype=np.int64)
    ab = np.array([t.a_blade for t in s.terms], dtype=np.int64)
    bb = np.array([t.b_blade for t in s.terms], dtype=np.int64)
    sg = np.array([-1.0 if t.negate else 1.0 for t in s.terms], dtype=np.float32)
    for arr in (ob, ab, bb, sg):
        arr.flags.writeable = False
    return ob, ab, bb, sg


def apply_schedule(s: OpSchedule, a, b) -> np.ndarray:
    """Execute the schedule on multivectors, broadcasting over leading axes.

    Matches geometric_product up to floating-point reassociation; arithmetic
    stays in the operands' common dtype.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    nb = s.sig.n_blades
    if a.shape[-1] != nb or b.shape[-1] != nb:
        raise DimensionMismatch(
            f"operands have blade axes {a.shape[-1]}/{b.shape[-1]}, expected {nb}"
        )
    dtype = np.result_type(a.dtype, b.dtype)
    shape = np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (nb,)
    out = np.zeros(shape, dtype=dtype)
    for t in s.terms:
        contrib = a[..., t.a_blade] * b[..., t.b_blade]
        if t.negate:
            out[..., t.out_blade] -= contrib
        else:
            out[..., t.out_blade] += contrib
    return out


def schedule_to_text(s: OpSchedule, labels: bool = False) -> str:
    """One line per term: ``out[t] += a[i] * b[j]`` (or ``-=``).

    With labels=True, blade masks are rendered as names (1, e1, e12, ...)
    instead of indices. Used for golden-file tests and debugging.
    """
    fmt = blade_label if labels else str
    lines = [
        f"out[{fmt(t.out_blade)}] {'-=' if t.negate else '+='} "
        f"a[{fmt(t.a_blade)}] * b[{fmt(t.b_blade)}]"
        for t in s.terms
    ]
    return "\n".join(lines)


def fma_lines(s: OpSchedule, out_fmt: str, a_fmt: str, b_fmt: str) -> list[str]:
    """Render the schedule as source lines for kernel generation.

    Terms contributing to the same output blade are fused into a single
    accumulation statement, e.g. ``acc0[l] += f0 * x0[l] - f3 * x3[l]``.
    The *_fmt strings are format templates taking the blade index.
    """
    by_out: dict[int, list[FmaTerm]] = {}
    for t in s.terms:
        by_out.setdefault(t.out_blade, []).append(t)
    lines = []
    for out_blade in sorted(by_out):
        parts = []
        for t in by_out[out_blade]:
            op = "-" if t.negate else "+"
            parts.append(f"{op} {a_fmt.format(t.a_blade)} * {b_fmt.format(t.b_blade)}")
        rhs = " ".join(parts)
        if rhs.startswith("+ "):
            rhs = rhs[2:]
        lines.append(f"{out_fmt.format(out_blade)} += {rhs}")
    return lines
