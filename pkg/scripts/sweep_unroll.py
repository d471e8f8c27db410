#!/usr/bin/env python3
"""Packed-kernel throughput vs unrolling factor U (package length = W * U).

B must be divisible by every W*U in the sweep; batch 32 covers U in {1,2,4}
at W=8. The shape of this curve is informational, not a contract.
"""

import argparse
from pathlib import Path

from mvkernels.algebra import Signature
from mvkernels.bench import BenchConfig, PlotSpec, emit_csv, emit_plot, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="conv2d", choices=("conv1d", "conv2d", "conv3d"))
    ap.add_argument("--B", type=int, default=32)
    ap.add_argument("--C", type=int, default=8)
    ap.add_argument("--dimage", type=int, default=16)
    ap.add_argument("--dfilter", type=int, default=3)
    ap.add_argument("--W", type=int, default=8)
    ap.add_argument("--unrolls", default="1,2,4")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("results/unroll_sweep"))
    args = ap.parse_args()

    k = int(args.kind[4])
    cfg = BenchConfig(
        kind=args.kind,
        sig=Signature((1,) * k),
        B=args.B,
        C_in=args.C,
        C_out=args.C,
        d_image=args.dimage,
        d_filter=args.dfilter,
        W=args.W,
        variants=("packed", "specialized"),
        sweep_unroll=tuple(int(u) for u in args.unrolls.split(",")),
        reps=args.reps,
        verify=True,
    )
    records = run_sweep(cfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.with_suffix(".csv").write_text(emit_csv(records))
    emit_plot(
        records,
        PlotSpec(x="U", title=f"{args.kind} W={args.W}, L=W*U"),
        args.out.with_suffix(".png"),
    )
    for r in records:
        print(
            f"U={r.U} {r.variant:12s} median {r.median_s * 1e3:9.2f} ms "
            f"{r.flops_per_s / 1e9:7.2f} GFLOP/s"
        )
    print(f"wrote {args.out.with_suffix('.csv')} and {args.out.with_suffix('.png')}")


if __name__ == "__main__":
    main()
