#!/usr/bin/env python3
"""Activation ladder throughput vs problem size (B x C), one mode per run."""

import argparse
from pathlib import Path

from mvkernels.activation import AggMode
from mvkernels.algebra import Signature
from mvkernels.bench import BenchConfig, PlotSpec, emit_csv, emit_plot, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--k", type=int, default=3, choices=(2, 3))
    ap.add_argument("--mode", default="mean", choices=[m.name.lower() for m in AggMode])
    ap.add_argument("--C", type=int, default=64)
    ap.add_argument("--batches", default="16,64,256,1024,4096")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    out = args.out or Path(f"results/activation_{args.mode}_k{args.k}")
    cfg = BenchConfig(
        kind="activation",
        sig=Signature((1,) * args.k),
        C_in=args.C,
        C_out=args.C,
        variants=("reference", "hoisted", "packed", "specialized"),
        sweep_batch=tuple(int(b) for b in args.batches.split(",")),
        reps=args.reps,
        verify=True,
        mode=AggMode[args.mode.upper()],
    )
    records = run_sweep(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".csv").write_text(emit_csv(records))
    emit_plot(
        records,
        PlotSpec(x="B", title=f"activation {args.mode} K=N_B={2**args.k} C={args.C}", logx=True),
        out.with_suffix(".png"),
    )
    base = {r.B: r.median_s for r in records if r.variant == "reference"}
    for r in records:
        tag = f"  ({base[r.B] / r.median_s:5.1f}x)" if r.variant != "reference" else ""
        print(
            f"B*C={r.B * r.C_in:8d} {r.variant:12s} {r.median_s * 1e3:9.3f} ms"
            f" {r.flops_per_s / 1e9:7.2f} GFLOP/s{tag}"
        )
    print(f"wrote {out.with_suffix('.csv')} and {out.with_suffix('.png')}")


if __name__ == "__main__":
    main()
