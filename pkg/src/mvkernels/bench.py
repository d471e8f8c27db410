"""Benchmark harness: parameter sweeps, FLOP-model throughput, parity suite.

Timing policy: single-threaded wall-clock (perf_counter_ns) around full
protocol-to-protocol forward calls, median and min over the configured
repetitions; verification runs are always separate calls and never enter
the timing statistics. Cycle-style throughput is derived only when the
caller states the core frequency, since pinning and fixed frequency are the
invoker's job, not this library's.

Input data is generated with scales that keep outputs well inside float32
territory, so relative comparisons (with a small cancellation floor) stay
meaningful across accumulation-order changes.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import activation as act
from . import conv as conv_mod
from . import linear as lin
from .algebra import Signature, all_valid_signatures, geometric_product, product_table
from .errors import AxisMismatch, ConfigInvalid, VerificationFailed
from .layout import Dims, pack_input, unpack_output
from .specialize import OpSchedule, apply_schedule, schedule_for

KINDS = ("conv1d", "conv2d", "conv3d", "linear", "activation")
VARIANTS = {
    "conv": ("reference", "kernelized", "packed", "specialized"),
    "linear": ("reference", "gemm"),
    "activation": ("reference", "hoisted", "packed", "specialized"),
}

CSV_COLUMNS = (
    "kind",
    "variant",
    "k",
    "B",
    "C_in",
    "C_out",
    "d_image",
    "d_filter",
    "W",
    "U",
    "flops",
    "median_s",
    "min_s",
    "flops_per_s",
    "bytes",
)


def local_operation_intensity(n_blades: int, unroll: int) -> float:
    """Rough flops-per-byte at the innermost packed-computation scope.

    Per packed computation the kernel touches the filter blades (scalars)
    and the output packages (vectors), while performing n_blades^2 * unroll
    vector FMAs; unrolling amortizes the scalar traffic, so intensity rises
    toward n_blades: 8 * n_blades / (8 + 1/unroll).
    """
    if n_blades < 1 or unroll < 1:
        raise ConfigInvalid("n_blades and unroll must be >= 1")
    return 8.0 * n_blades / (8.0 + 1.0 / unroll)


def max_rel_error(a, b, floor: float = 1e-2) -> float:
    """Largest |a-b| / (floor + max(|a|, |b|)) over all elements.

    The floor turns a pure relative check into relative-with-absolute-floor:
    at tolerance r the implied absolute slack is r*floor, which absorbs
    cancellation-dominated elements without loosening the healthy ones.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise VerificationFailed(f"shape mismatch {a.shape} vs {b.shape}")
    if a.size == 0:
        return 0.0
    denom = floor + np.maximum(np.abs(a), np.abs(b))
    return float(np.max(np.abs(a - b) / denom))


def max_abs_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise VerificationFailed(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


# --- random instances ---------------------------------------------------------


def random_conv_instance(
    rng: np.random.Generator,
    dims: Dims,
    sig: Signature,
    W: int | None = None,
    U: int = 1,
    target_sigma: float = 0.005,
):
    """Input tensor plus layer with outputs scaled to roughly target_sigma."""
    n_acc = dims.C_in * dims.filter_positions * dims.n_blades
    f_scale = target_sigma / np.sqrt(n_acc)
    x = rng.standard_normal(dims.input_shape(), dtype=np.float32)
    f = (rng.standard_normal(dims.filters_shape()) * f_scale).astype(np.float32)
    b = (rng.standard_normal(dims.bias_shape()) * target_sigma).astype(np.float32)
    return x, conv_mod.make_conv_layer(dims, sig, f, b, W=W, U=U)


def random_linear_instance(
    rng: np.random.Generator,
    sig: Signature,
    B: int,
    C_in: int,
    C_out: int,
    target_sigma: float = 0.01,
):
    nb = sig.n_blades
    w_scale = target_sigma / np.sqrt(C_in * nb)
    x = rng.standard_normal((B, C_in, nb), dtype=np.float32)
    w = (rng.standard_normal((nb, C_out, C_in)) * w_scale).astype(np.float32)
    b = (rng.standard_normal((nb, C_out)) * target_sigma).astype(np.float32)
    return x, lin.make_linear_layer(sig, w, b)


def random_activation_instance(
    rng: np.random.Generator,
    sig: Signature,
    B: int,
    C: int,
    K: int,
    mode: act.AggMode,
    shuffle_indices: bool = False,
):
    nb = sig.n_blades
    idx = np.arange(nb)
    if shuffle_indices:
        rng.shuffle(idx)
    ki = tuple(int(i) for i in idx[:K])
    weight = bias = None
    if mode == act.AggMode.LINEAR:
        weight = (rng.standard_normal((C, K)) / np.sqrt(K)).astype(np.float32)
        bias = (rng.standard_normal(C) * 0.1).astype(np.float32)
    x = rng.standard_normal((B, C, nb), dtype=np.float32)
    return x, act.make_activation_config(sig, mode, ki, weight, bias)


# --- configuration and records -------------------------------------------------


@dataclass
class BenchConfig:
    """One sweep: a layer kind, base sizes, variants, and sweep lists.

    Sweep lists (channels / batch / unroll) default to the base value; the
    run covers their cartesian product. All variants of one sweep point see
    identical input values in freshly allocated buffers.
    """

    kind: str
    sig: Signature
    B: int = 8
    C_in: int = 4
    C_out: int = 4
    d_image: int = 12
    d_filter: int = 3
    variants: tuple[str, ...] = ()
    W: int | None = None
    U: int = 1
    sweep_channels: tuple[int, ...] = ()
    sweep_batch: tuple[int, ...] = ()
    sweep_unroll: tuple[int, ...] = ()
    reps: int = 5
    warmup: int = 1
    timer: str = "wall"
    verify: bool = False
    verify_threshold: int = 2_000_000
    seed: int = 0
    mode: act.AggMode = act.AggMode.SUM
    K: int | None = None
    sigmoid_cost: int = 30
    ghz: float | None = None

    def family(self) -> str:
        return "conv" if self.kind.startswith("conv") else self.kind

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigInvalid(f"unknown kind {self.kind!r}, pick one of {KINDS}")
        if self.reps < 3:
            raise ConfigInvalid(f"repetitions must be >= 3, got {self.reps}")
        if self.warmup < 0:
            raise ConfigInvalid("warmup must be >= 0")
        if self.timer not in ("wall",):
            raise ConfigInvalid(f"unsupported timer {self.timer!r}")
        fam = self.family()
        known = VARIANTS[fam]
        for v in self.variants:
            if v not in known:
                raise ConfigInvalid(f"unknown {fam} variant {v!r}, pick from {known}")
        if fam == "conv":
            k = int(self.kind[4])
            if self.sig.k != k:
                raise ConfigInvalid(
                    f"kind {self.kind} needs a {k}-dim signature, got k={self.sig.k}"
                )
        if fam == "activation":
            K = self.K if self.K is not None else self.sig.n_blades
            if not 1 <= K <= self.sig.n_blades:
                raise ConfigInvalid(f"K={K} outside [1, {self.sig.n_blades}]")

    def resolved_variants(self) -> tuple[str, ...]:
        return self.variants or VARIANTS[self.family()]


@dataclass
class BenchRecord:
    """One (variant, sweep point) measurement."""

    kind: str
    variant: str
    sig: Signature
    B: int
    C_in: int
    C_out: int
    d_image: int
    d_filter: int
    W: int
    U: int
    flops: int
    median_s: float
    min_s: float
    bytes: int
    verified: bool | None = None
    max_err: float | None = None
    rearrange_s: float | None = None
    flops_per_cycle: float | None = None
    timing_stable: bool = True

    @property
    def k(self) -> int:
        return self.sig.k

    @property
    def flops_per_s(self) -> float:
        return self.flops / self.median_s if self.median_s > 0 else float("inf")


def _time_fn(fn: Callable[[], object], reps: int, warmup: int) -> list[float]:
    for _ in range(warmup):
        fn()
    out = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        out.append((time.perf_counter_ns() - t0) / 1e9)
    return out


def _conv_point(cfg: BenchConfig, rng, C: int, B: int, U: int):
    k = int(cfg.kind[4])
    dims = Dims(
        B=B, C_in=C, C_out=C, d_image=cfg.d_image, d_filter=cfg.d_filter, k=k
    )
    x, layer = random_conv_instance(rng, dims, cfg.sig, W=cfg.W, U=U)
    nb = dims.n_blades
    ws = 4 * (
        np.prod(dims.input_shape(), dtype=np.int64)
        + np.prod(dims.output_shape(), dtype=np.int64)
        + np.prod(dims.filters_shape(), dtype=np.int64)
        + np.prod(dims.bias_shape(), dtype=np.int64)
    )
    flops = conv_mod.conv_flops(dims, layer.schedule)
    n_elements = int(np.prod(dims.input_shape(), dtype=np.int64))

    def run(variant):
        return lambda: conv_mod.conv_forward(x, layer, variant)

    def rearrange():
        xp = pack_input(x, dims, layer.L)
        yp = np.zeros(
            (dims.C_out, dims.out_positions, dims.B // layer.L, nb, layer.L),
            dtype=np.float32,
        )
        unpack_output(yp, dims, layer.L)

    meta = dict(
        B=B, C_in=C, C_out=C, d_image=cfg.d_image, d_filter=cfg.d_filter,
        W=layer.W, U=U, flops=int(flops), bytes=int(ws),
    )
    return run, rearrange, meta, n_elements, ("reference", max_rel_error, 1e-4)


def _linear_point(cfg: BenchConfig, rng, C: int, B: int, U: int):
    x, layer = random_linear_instance(rng, cfg.sig, B, C, C)
    nb = cfg.sig.n_blades
    ws = 4 * (2 * B * C * nb + nb * C * C + nb * C)
    flops = lin.linear_flops(B, C, C, layer.schedule)

    def run(variant):
        return lambda: lin.linear_forward(x, layer, variant)

    meta = dict(
        B=B, C_in=C, C_out=C, d_image=1, d_filter=1,
        W=cfg.W or conv_mod.default_vector_width(), U=U,
        flops=int(flops), bytes=int(ws),
    )
    return run, None, meta, B * C * nb, ("reference", max_rel_error, 1e-4)


def _activation_point(cfg: BenchConfig, rng, C: int, B: int, U: int):
    nb = cfg.sig.n_blades
    K = cfg.K if cfg.K is not None else nb
    x, acfg = random_activation_instance(rng, cfg.sig, B, C, K, cfg.mode)
    ws = 4 * (2 * B * C * nb + (C * K + C if cfg.mode == act.AggMode.LINEAR else 0))
    flops = act.activation_flops(B, C, nb, K, cfg.mode, cfg.sigmoid_cost)

    def run(variant):
        return lambda: act.activation_forward(x, acfg, variant)

    meta = dict(
        B=B, C_in=C, C_out=C, d_image=1, d_filter=1,
        W=cfg.W or conv_mod.default_vector_width(), U=U,
        flops=int(flops), bytes=int(ws),
    )
    return run, None, meta, B * C * nb, ("reference", max_abs_error, 1e-5)


def run_sweep(cfg: BenchConfig) -> list[BenchRecord]:
    """Run every (variant, sweep point), fresh identical inputs per point."""
    cfg.validate()
    fam = cfg.family()
    point_builder = {
        "conv": _conv_point,
        "linear": _linear_point,
        "activation": _activation_point,
    }[fam]
    channels = cfg.sweep_channels or (cfg.C_in,)
    batches = cfg.sweep_batch or (cfg.B,)
    unrolls = cfg.sweep_unroll or (cfg.U,)
    records = []
    for C in channels:
        for B in batches:
            for U in unrolls:
                rng = np.random.default_rng(
                    np.random.SeedSequence([cfg.seed, C, B, U])
                )
                run, rearrange, meta, n_el, (ref_name, err_fn, tol) = point_builder(
                    cfg, rng, C, B, U
                )
                want_verify = cfg.verify and n_el <= cfg.verify_threshold
                ref_out = run(ref_name)() if want_verify else None
                for variant in cfg.resolved_variants():
                    fn = run(variant)
                    verified = None
                    err = None
                    if want_verify:
                        if variant == ref_name:
                            verified = True
                            err = 0.0
                        else:
                            err = err_fn(fn(), ref_out)
                            if err > tol:
                                raise VerificationFailed(
                                    f"{cfg.kind}/{variant} at C={C} B={B} U={U}: "
                                    f"error {err:.3e} exceeds {tol:.1e}"
                                )
                            verified = True
                    times = _time_fn(fn, cfg.reps, cfg.warmup)
                    med = statistics.median(times)
                    lo = min(times)
                    stable = med <= 1.2 * lo
                    if not stable:
                        warnings.warn(
                            f"noisy timing for {cfg.kind}/{variant}: "
                            f"median/min = {med / lo:.2f}",
                            stacklevel=2,
                        )
                    rearrange_s = None
                    if rearrange is not None and variant in ("packed", "specialized"):
                        rearrange_s = statistics.median(
                            _time_fn(rearrange, cfg.reps, cfg.warmup)
                        )
                    records.append(
                        BenchRecord(
                            kind=cfg.kind,
                            variant=variant,
                            sig=cfg.sig,
                            median_s=med,
                            min_s=lo,
                            verified=verified,
                            max_err=err,
                            rearrange_s=rearrange_s,
                            flops_per_cycle=(
                                meta["flops"] / (med * cfg.ghz * 1e9)
                                if cfg.ghz
                                else None
                            ),
                            timing_stable=stable,
                            **meta,
                        )
                    )
    return records


# --- CSV and plots --------------------------------------------------------------


def emit_csv(records: Sequence[BenchRecord]) -> str:
    """Fixed documented column set, one row per record.

    Floats are written with repr so a round-trip parse recovers them exactly.
    """
    if not records:
        raise AxisMismatch("no records to emit")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.kind,
                r.variant,
                r.k,
                r.B,
                r.C_in,
                r.C_out,
                r.d_image,
                r.d_filter,
                r.W,
                r.U,
                r.flops,
                repr(r.median_s),
                repr(r.min_s),
                repr(r.flops_per_s),
                r.bytes,
            ]
        )
    return buf.getvalue()


def parse_csv(text: str) -> list[BenchRecord]:
    """Inverse of emit_csv (timing-derived fields only)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise AxisMismatch(f"unexpected CSV header {rows[0] if rows else None}")
    records = []
    for row in rows[1:]:
        d = dict(zip(CSV_COLUMNS, row))
        records.append(
            BenchRecord(
                kind=d["kind"],
                variant=d["variant"],
                sig=Signature(tuple([1] * int(d["k"]))),
                B=int(d["B"]),
                C_in=int(d["C_in"]),
                C_out=int(d["C_out"]),
                d_image=int(d["d_image"]),
                d_filter=int(d["d_filter"]),
                W=int(d["W"]),
                U=int(d["U"]),
                flops=int(d["flops"]),
                median_s=float(d["median_s"]),
                min_s=float(d["min_s"]),
                bytes=int(d["bytes"]),
            )
        )
    return records


@dataclass
class PlotSpec:
    """Axes for a throughput chart: x field, y field, one line per variant."""

    x: str = "C_in"
    y: str = "flops_per_s"
    title: str | None = None
    logx: bool = False
    cache_lines: tuple[tuple[str, float], ...] = ()


_PLOT_FIELDS = set(CSV_COLUMNS) | {"flops_per_s"}


def emit_plot(records: Sequence[BenchRecord], spec: PlotSpec, path) -> None:
    """Throughput-vs-size line chart, one line per variant, saved to path."""
    if not records:
        raise AxisMismatch("cannot plot zero records")
    if spec.x not in _PLOT_FIELDS or spec.y not in _PLOT_FIELDS:
        raise AxisMismatch(f"unknown plot axes {spec.x!r}/{spec.y!r}")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    by_variant: dict[str, list[BenchRecord]] = {}
    for r in records:
        by_variant.setdefault(r.variant, []).append(r)
    for variant, rs in sorted(by_variant.items()):
        rs = sorted(rs, key=lambda r: getattr(r, spec.x))
        xs = [getattr(r, spec.x) for r in rs]
        ys = [getattr(r, spec.y) for r in rs]
        ax.plot(xs, ys, marker="o", label=variant)
    for label, x_at in spec.cache_lines:
        ax.axvline(x_at, color="grey", linestyle="--", linewidth=0.8)
        ax.annotate(label, (x_at, ax.get_ylim()[1]), fontsize=8, rotation=90)
    if spec.logx:
        ax.set_xscale("log")
    ax.set_xlabel(spec.x)
    ax.set_ylabel(spec.y)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# --- parity suite ---------------------------------------------------------------


@dataclass
class ParityEntry:
    name: str
    max_err: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.max_err <= self.tol


@dataclass
class ParityReport:
    entries: list[ParityEntry] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(e.ok for e in self.entries)

    def render(self) -> str:
        lines = []
        for e in self.entries:
            status = "PASS" if e.ok else "FAIL"
            lines.append(f"{status}  {e.name:<44s} max_err={e.max_err:.3e} tol={e.tol:.1e}")
        n_fail = sum(not e.ok for e in self.entries)
        lines.append(
            f"{len(self.entries)} pairs checked, {n_fail} failing"
            if n_fail
            else f"{len(self.entries)} pairs checked, all within tolerance"
        )
        return "\n".join(lines)


def parity_report(
    seed: int = 0,
    schedule_transform: Callable[[OpSchedule], OpSchedule] | None = None,
) -> ParityReport:
    """Cross-variant equivalence on small random instances, every valid
    signature with k <= 3. Purely correctness -- no timing -- so output is
    identical across runs for a fixed seed.

    schedule_transform is a fault-injection hook: it rewrites each schedule
    before the schedule-vs-algebra check, letting tests prove that a broken
    schedule is reported.
    """
    report = ParityReport()
    rng = np.random.default_rng(seed)
    conv_dims = {1: (10, 3), 2: (6, 2), 3: (4, 2)}  # d_image, d_filter per k

    for sig in all_valid_signatures(3):
        nb = sig.n_blades
        table = product_table(sig)
        sched = schedule_for(sig)
        if schedule_transform is not None:
            sched = schedule_transform(sched)
        a = rng.standard_normal((64, nb))
        b = rng.standard_normal((64, nb))
        err = max_rel_error(apply_schedule(sched, a, b), geometric_product(a, b, table))
        report.entries.append(ParityEntry(f"schedule/{sig}", err, 1e-6))

        d_image, d_filter = conv_dims[sig.k]
        dims = Dims(B=8, C_in=2, C_out=2, d_image=d_image, d_filter=d_filter, k=sig.k)
        x, layer = random_conv_instance(rng, dims, sig, W=4, U=1)
        ref = conv_mod.conv_reference(x, layer)
        for variant in ("kernelized", "packed"):
            err = max_rel_error(conv_mod.conv_forward(x, layer, variant), ref)
            report.entries.append(
                ParityEntry(f"conv{sig.k}d/{sig}/{variant}", err, 1e-4)
            )

        xl, llayer = random_linear_instance(rng, sig, 8, 3, 3)
        err = max_rel_error(
            lin.linear_blade_gemm(xl, llayer), lin.linear_reference(xl, llayer)
        )
        report.entries.append(ParityEntry(f"linear/{sig}/gemm", err, 1e-4))

    # Generated fully-unrolled conv kernels, one dense signature per k.
    for k in (1, 2, 3):
        sig = Signature((1,) * k)
        d_image, d_filter = conv_dims[k]
        dims = Dims(B=8, C_in=2, C_out=2, d_image=d_image, d_filter=d_filter, k=k)
        x, layer = random_conv_instance(rng, dims, sig, W=4, U=1)
        err = max_rel_error(
            conv_mod.conv_forward(x, layer, "specialized"),
            conv_mod.conv_reference(x, layer),
        )
        report.entries.append(ParityEntry(f"conv{k}d/{sig}/specialized", err, 1e-4))

    # Activation ladder depends only on the blade count, once per k and mode.
    for k in (1, 2, 3):
        sig = Signature((1,) * k)
        nb = sig.n_blades
        for mode in act.AggMode:
            x, acfg = random_activation_instance(rng, sig, 4, 24, nb, mode)
            ref = act.activation_reference(x, acfg)
            ladder = [("hoisted", act.activation_hoisted(x, acfg))]
            ladder.append(("packed", act.activation_packed(x, None, acfg)))
            if nb in (4, 8):
                ladder.append(("specialized", act.activation_specialized(x, acfg)))
            for name, got in ladder:
                err = max_abs_error(got, ref)
                report.entries.append(
                    ParityEntry(f"activation/k{k}/{mode.name.lower()}/{name}", err, 1e-5)
                )
    return report
