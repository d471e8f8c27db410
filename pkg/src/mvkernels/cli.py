"""Command line interface: bench, parity, plot, and serve subcommands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .activation import AggMode
from .algebra import Signature, validate_signature
from .errors import ConfigInvalid, MvkernelsError


def _parse_sig(text: str) -> Signature:
    try:
        return validate_signature(int(v) for v in text.split(","))
    except ValueError as e:
        raise ConfigInvalid(f"cannot parse signature {text!r}: {e}") from e


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _resolve_sig(args) -> Signature:
    k = None
    if args.kind.startswith("conv"):
        k = int(args.kind[4])
    elif args.k is not None:
        k = args.k
    if args.sig is not None:
        sig = _parse_sig(args.sig)
        if k is not None and sig.k != k:
            raise ConfigInvalid(
                f"--sig {args.sig} has k={sig.k}, but kind/--k imply k={k}"
            )
        return sig
    if k is None:
        k = 2
    return Signature((1,) * k)


def _add_bench_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", required=True, choices=bench.KINDS)
    p.add_argument("--k", type=int, default=None, help="algebra dimension (linear/activation)")
    p.add_argument("--sig", default=None, help="comma list of metric values, e.g. 1,1,-1")
    p.add_argument("--B", type=int, default=8)
    p.add_argument("--Cin", type=int, default=4)
    p.add_argument("--Cout", type=int, default=4)
    p.add_argument("--dimage", type=int, default=12)
    p.add_argument("--dfilter", type=int, default=3)
    p.add_argument("--variants", default=None, help="comma list; default: all for the kind")
    p.add_argument("--W", type=int, default=None, help="vector width (default: platform)")
    p.add_argument("--U", type=int, default=1, help="unroll factor")
    p.add_argument("--sweep-C", default=None, help="comma list of channel counts")
    p.add_argument("--sweep-B", default=None, help="comma list of batch sizes")
    p.add_argument("--sweep-U", default=None, help="comma list of unroll factors")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--verify", action="store_true", help="check variants against the reference before timing")
    p.add_argument("--csv", type=Path, default=None)
    p.add_argument("--plot", type=Path, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=[m.name.lower() for m in AggMode], default="sum")
    p.add_argument("--K", type=int, default=None, help="activation kernel blade count")
    p.add_argument("--sigmoid-cost", type=int, default=30)
    p.add_argument("--ghz", type=float, default=None, help="core frequency for flops/cycle")


def _cmd_bench(args) -> int:
    sig = _resolve_sig(args)
    cfg = bench.BenchConfig(
        kind=args.kind,
        sig=sig,
        B=args.B,
        C_in=args.Cin,
        C_out=args.Cout,
        d_image=args.dimage,
        d_filter=args.dfilter,
        variants=tuple(args.variants.split(",")) if args.variants else (),
        W=args.W,
        U=args.U,
        sweep_channels=_parse_int_list(args.sweep_C) if args.sweep_C else (),
        sweep_batch=_parse_int_list(args.sweep_B) if args.sweep_B else (),
        sweep_unroll=_parse_int_list(args.sweep_U) if args.sweep_U else (),
        reps=args.reps,
        warmup=args.warmup,
        verify=args.verify,
        seed=args.seed,
        mode=AggMode[args.mode.upper()],
        K=args.K,
        sigmoid_cost=args.sigmoid_cost,
        ghz=args.ghz,
    )
    records = bench.run_sweep(cfg)
    text = bench.emit_csv(records)
    if args.csv:
        args.csv.write_text(text)
        print(f"wrote {len(records)} records to {args.csv}")
    else:
        sys.stdout.write(text)
    if args.plot:
        x = "C_in"
        if len(cfg.sweep_unroll) > 1:
            x = "U"
        elif len(cfg.sweep_batch) > 1:
            x = "B"
        bench.emit_plot(records, bench.PlotSpec(x=x, title=args.kind), args.plot)
        print(f"wrote plot to {args.plot}")
    return 0


def _cmd_parity(args) -> int:
    report = bench.parity_report(seed=args.seed)
    print(report.render())
    return 0 if report.ok else 1


def _cmd_plot(args) -> int:
    records = bench.parse_csv(Path(args.csv).read_text())
    cache_lines = ()
    if args.cache_lines:
        cache_lines = tuple(
            (part.split(":")[0], float(part.split(":")[1]))
            for part in args.cache_lines.split(",")
        )
    spec = bench.PlotSpec(
        x=args.x, y=args.y, title=args.title, logx=args.logx, cache_lines=cache_lines
    )
    bench.emit_plot(records, spec, args.out)
    print(f"wrote plot to {args.out}")
    return 0


def _cmd_serve(args) -> int:
    from .serve import serve_stdio

    return serve_stdio()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mvkernels",
        description="Clifford neural layer inference kernels: benchmarks and parity checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_bench = sub.add_parser("bench", help="time layer variants over a parameter sweep")
    _add_bench_args(p_bench)
    p_bench.set_defaults(fn=_cmd_bench)

    p_parity = sub.add_parser("parity", help="cross-variant equivalence suite")
    p_parity.add_argument("--seed", type=int, default=0)
    p_parity.set_defaults(fn=_cmd_parity)

    p_plot = sub.add_parser("plot", help="plot a CSV produced by bench")
    p_plot.add_argument("--csv", required=True)
    p_plot.add_argument("--x", default="C_in")
    p_plot.add_argument("--y", default="flops_per_s")
    p_plot.add_argument("--out", required=True)
    p_plot.add_argument("--title", default=None)
    p_plot.add_argument("--logx", action="store_true")
    p_plot.add_argument("--cache-lines", default=None, help="label:bytes pairs, comma separated")
    p_plot.set_defaults(fn=_cmd_plot)

    p_serve = sub.add_parser(
        "serve", help="JSON-lines layer server over stdio (used by language bindings)"
    )
    p_serve.set_defaults(fn=_cmd_serve)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except MvkernelsError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
