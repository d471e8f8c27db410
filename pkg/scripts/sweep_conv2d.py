#!/usr/bin/env python3
"""Throughput vs network size for the 2D convolution variants.

Fixes (B, d_image, d_filter) and grows C_in = C_out, mirroring the
performance-vs-size methodology; verification runs before timing for sizes
below the element threshold. Writes CSV and a PNG next to each other.
"""

import argparse
from pathlib import Path

from mvkernels.algebra import Signature
from mvkernels.bench import BenchConfig, PlotSpec, emit_csv, emit_plot, run_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--B", type=int, default=8)
    ap.add_argument("--dimage", type=int, default=32)
    ap.add_argument("--dfilter", type=int, default=5)
    ap.add_argument("--channels", default="2,4,8,16,24")
    ap.add_argument("--sig", default="1,1")
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--out", type=Path, default=Path("results/conv2d_size_sweep"))
    args = ap.parse_args()

    cfg = BenchConfig(
        kind="conv2d",
        sig=Signature(tuple(int(v) for v in args.sig.split(","))),
        B=args.B,
        d_image=args.dimage,
        d_filter=args.dfilter,
        variants=("kernelized", "packed", "specialized"),
        sweep_channels=tuple(int(c) for c in args.channels.split(",")),
        reps=args.reps,
        verify=True,
    )
    records = run_sweep(cfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    csv_path = args.out.with_suffix(".csv")
    csv_path.write_text(emit_csv(records))
    emit_plot(
        records,
        PlotSpec(x="C_in", title=f"conv2d B={args.B} d_image={args.dimage} d_filter={args.dfilter}"),
        args.out.with_suffix(".png"),
    )
    for r in records:
        print(
            f"C={r.C_in:3d} {r.variant:12s} median {r.median_s * 1e3:9.2f} ms "
            f"{r.flops_per_s / 1e9:7.2f} GFLOP/s"
        )
    print(f"wrote {csv_path} and {args.out.with_suffix('.png')}")


if __name__ == "__main__":
    main()
