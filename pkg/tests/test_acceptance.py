"""Acceptance suite: one test per release criterion, tolerances pinned.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per
criterion. Budgets are asserted with a wall clock inside each test.
"""

import csv
import io
import statistics
import subprocess
import sys
import time
import tracemalloc

import numpy as np
from mvkernels.activation import AggMode
from mvkernels.algebra import (
    Signature,
    all_valid_signatures,
    basis_blade,
    geometric_product,
    multivector_add,
    product_table,
)
from mvkernels.bench import (
    CSV_COLUMNS,
    max_abs_error,
    max_rel_error,
    random_activation_instance,
    random_conv_instance,
    random_linear_instance,
)
from mvkernels.conv import (
    build_expanded_kernel,
    conv_forward,
    conv_kernelized,
    conv_reference,
    make_conv_layer,
)
from mvkernels.activation import (
    activation_hoisted,
    activation_packed,
    activation_reference,
    activation_specialized,
)
from mvkernels.layout import Dims, pack_filters
from mvkernels.linear import linear_blade_gemm, linear_reference
from mvkernels.specialize import apply_schedule, schedule_for
from mvkernels.cli import main as cli_main

ALL_SIGS = all_valid_signatures(3)


def report(name):
    print(f"\nACCEPTANCE PASS: {name}")


def median_time(fn, reps=5, warmup=2):
    for _ in range(warmup):
        fn()
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return statistics.median(ts)


def test_algebra_correctness():
    t_start = time.monotonic()
    assert len(ALL_SIGS) == 36
    rng = np.random.default_rng(2024)
    for sig in ALL_SIGS:
        table = product_table(sig)
        nb = sig.n_blades
        for i in range(sig.k):
            ei = basis_blade(1 << i, sig)
            np.testing.assert_array_equal(
                geometric_product(ei, ei, table), sig.g[i] * basis_blade(0, sig)
            )
            for j in range(i + 1, sig.k):
                ej = basis_blade(1 << j, sig)
                np.testing.assert_array_equal(
                    geometric_product(ei, ej, table),
                    -geometric_product(ej, ei, table),
                )
        a, b, c = rng.standard_normal((3, 100, nb))
        assoc_l = geometric_product(geometric_product(a, b, table), c, table)
        assoc_r = geometric_product(a, geometric_product(b, c, table), table)
        assert max_rel_error(assoc_l, assoc_r, floor=1e-6) <= 1e-5
        dist_l = geometric_product(a, multivector_add(b, c), table)
        dist_r = geometric_product(a, b, table) + geometric_product(a, c, table)
        assert max_rel_error(dist_l, dist_r, floor=1e-6) <= 1e-5
    elapsed = time.monotonic() - t_start
    assert elapsed < 10.0
    report(
        f"algebra correctness: 36 signatures, 100 random triples each, "
        f"rel tol 1e-5 ({elapsed:.1f}s < 10s)"
    )


def test_schedule_equivalence():
    t_start = time.monotonic()
    rng = np.random.default_rng(7)
    for sig in ALL_SIGS:
        sched = schedule_for(sig)
        table = product_table(sig)
        nb = sig.n_blades
        a = rng.standard_normal((1000, nb))
        b = rng.standard_normal((1000, nb))
        err = max_rel_error(
            apply_schedule(sched, a, b), geometric_product(a, b, table), floor=1e-6
        )
        assert err <= 1e-6
        if any(g == 0 for g in sig.g):
            assert len(sched.terms) < nb * nb
        else:
            assert len(sched.terms) == nb * nb
    elapsed = time.monotonic() - t_start
    assert elapsed < 10.0
    report(
        f"schedule equivalence: 36 signatures x 1000 operand pairs, rel 1e-6, "
        f"sparsity strict under zero metrics ({elapsed:.1f}s < 10s)"
    )


def test_convolution_three_way_equivalence():
    t_start = time.monotonic()
    rng = np.random.default_rng(99)
    cases = {
        1: [(8, 1, 12, 3), (16, 2, 10, 2), (8, 3, 9, 4), (16, 4, 12, 5), (8, 2, 7, 2)],
        2: [(8, 1, 6, 2), (16, 2, 8, 3), (8, 3, 12, 3), (8, 4, 10, 2), (16, 1, 5, 2)],
        3: [(8, 1, 4, 2), (16, 2, 5, 2), (8, 3, 6, 3), (8, 4, 4, 2), (16, 1, 6, 2)],
    }
    n_checked = 0
    for k, combos in cases.items():
        valid = [s for s in ALL_SIGS if s.k == k]
        for B, C, d_image, d_filter in combos:
            sig = valid[int(rng.integers(len(valid)))]
            dims = Dims(B=B, C_in=C, C_out=C, d_image=d_image, d_filter=d_filter, k=k)
            x, layer = random_conv_instance(rng, dims, sig, W=8, U=1)
            ref = conv_reference(x, layer)
            err_k = max_rel_error(conv_kernelized(x, layer), ref)
            err_p = max_rel_error(conv_forward(x, layer, "packed"), ref)
            assert err_k <= 1e-4, f"kernelized {sig} {dims}: {err_k}"
            assert err_p <= 1e-4, f"packed {sig} {dims}: {err_p}"
            n_checked += 1
    elapsed = time.monotonic() - t_start
    assert elapsed < 60.0
    report(
        f"convolution 3-way equivalence: {n_checked} random size/signature combos "
        f"across k=1,2,3, rel 1e-4 ({elapsed:.1f}s < 60s)"
    )


def test_linear_equivalence():
    t_start = time.monotonic()
    rng = np.random.default_rng(5)
    for k in (1, 2, 3):
        valid = [s for s in ALL_SIGS if s.k == k]
        for i in range(10):
            sig = valid[int(rng.integers(len(valid)))]
            B = int(rng.choice([4, 8, 16]))
            C_in = int(rng.integers(1, 9))
            C_out = int(rng.integers(1, 9))
            x, layer = random_linear_instance(rng, sig, B, C_in, C_out)
            err = max_rel_error(linear_blade_gemm(x, layer), linear_reference(x, layer))
            assert err <= 1e-4, f"gemm {sig} B={B} C={C_in}x{C_out}: {err}"
    # cross-check against 1x1 convolution
    for k in (1, 2, 3):
        sig = Signature((1,) * k)
        x, llayer = random_linear_instance(rng, sig, 8, 3, 4)
        dims = Dims(B=8, C_in=3, C_out=4, d_image=1, d_filter=1, k=k)
        f = llayer.weight.transpose(0, 2, 1)[:, :, :, None]
        clayer = make_conv_layer(dims, sig, f, llayer.bias)
        conv_out = conv_reference(x[:, :, None, :], clayer)[:, :, 0, :]
        err = max_rel_error(linear_reference(x, llayer), conv_out)
        assert err <= 1e-5, f"1x1 conv cross-check k={k}: {err}"
    elapsed = time.monotonic() - t_start
    assert elapsed < 30.0
    report(
        f"linear equivalence: blade-GEMM vs reference, 10 combos per k at rel 1e-4, "
        f"1x1 conv cross-check at rel 1e-5 ({elapsed:.1f}s < 30s)"
    )


def test_activation_ladder_equivalence():
    t_start = time.monotonic()
    rng = np.random.default_rng(12)
    n_checked = 0
    for k in (1, 2, 3):
        sig = Signature((1,) * k)
        nb = sig.n_blades
        for mode in AggMode:
            for K in sorted({1, max(1, nb // 2), nb}):
                # C=13 exercises the packed tail path (not a multiple of 8)
                x, cfg = random_activation_instance(
                    rng, sig, 6, 13, K, mode, shuffle_indices=True
                )
                ref = activation_reference(x, cfg)
                assert max_abs_error(activation_hoisted(x, cfg), ref) <= 1e-5
                assert max_abs_error(activation_packed(x, None, cfg), ref) <= 1e-5
                if K == nb and nb in (4, 8):
                    x2, cfg2 = random_activation_instance(
                        rng, sig, 6, 16, K, mode, shuffle_indices=True
                    )
                    ref2 = activation_reference(x2, cfg2)
                    err = max_abs_error(activation_specialized(x2, cfg2), ref2)
                    assert err <= 1e-5
                n_checked += 1
    elapsed = time.monotonic() - t_start
    assert elapsed < 30.0
    report(
        f"activation ladder equivalence: {n_checked} (k, mode, K) combos, "
        f"abs 1e-5, tail path included ({elapsed:.1f}s < 30s)"
    )


def test_memory_contract():
    rng = np.random.default_rng(3)
    sig = Signature((1, 1))
    dims = Dims(B=8, C_in=4, C_out=4, d_image=8, d_filter=3, k=2)
    x, layer = random_conv_instance(rng, dims, sig, W=8)
    nb = dims.n_blades

    kern = build_expanded_kernel(layer)
    assert kern.shape == (dims.C_out * nb, dims.C_in * nb, dims.filter_positions)
    assert kern.nbytes == nb * layer.filters.nbytes  # the documented duplication

    # packed path: the only parameter transform is a same-size permutation
    assert layer.packed_filters.nbytes == layer.filters.nbytes
    assert pack_filters(layer.filters, dims).nbytes == layer.filters.nbytes

    # packed conv and blade GEMM never allocate anything kernel-sized
    xl, llayer = random_linear_instance(rng, sig, 8, 16, 16)
    expanded_linear_bytes = llayer.weight.nbytes * nb
    conv_forward(x, layer, "packed")  # warm the JIT outside the traced region
    linear_blade_gemm(xl, llayer)
    tracemalloc.start()
    conv_forward(x, layer, "packed")
    _, conv_peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    tracemalloc.start()
    linear_blade_gemm(xl, llayer)
    _, lin_peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()
    io_bytes = 2 * x.nbytes + 2 * xl.nbytes  # transposes/copies of activations
    assert conv_peak < kern.nbytes + io_bytes
    assert lin_peak < expanded_linear_bytes + io_bytes
    report(
        "memory contract: expanded kernel carries the N_B-fold duplication; "
        "packed filters and blade-GEMM stay at original parameter size"
    )


def test_conv2d_relative_speedup():
    sig = Signature((1, 1))
    dims = Dims(B=8, C_in=16, C_out=16, d_image=24, d_filter=5, k=2)
    working_set = 4 * (
        np.prod(dims.input_shape(), dtype=np.int64)
        + np.prod(dims.output_shape(), dtype=np.int64)
        + np.prod(dims.filters_shape(), dtype=np.int64)
        + np.prod(dims.bias_shape(), dtype=np.int64)
    )
    assert working_set > 1 << 20, f"working set {working_set} bytes must exceed 1 MiB"
    rng = np.random.default_rng(17)
    x, layer = random_conv_instance(rng, dims, sig, W=8, U=1)
    ref = conv_reference(x, layer)
    assert max_rel_error(conv_forward(x, layer, "specialized"), ref) <= 1e-4
    t_base = median_time(lambda: conv_kernelized(x, layer), reps=5)
    t_fast = median_time(lambda: conv_forward(x, layer, "specialized"), reps=5)
    speedup = t_base / t_fast
    assert speedup >= 2.0, f"speedup {speedup:.2f}x below the 2x floor"
    report(
        f"conv2d relative speedup: specialized {speedup:.2f}x over expanded-kernel "
        f"baseline at {working_set / 2**20:.1f} MiB working set (>= 2x required)"
    )


def test_activation_relative_speedup():
    sig = Signature((1, 1, 1))
    B, C = 256, 256
    assert B * C >= 2**16
    rng = np.random.default_rng(23)
    speedups = {}
    for mode in AggMode:
        x, cfg = random_activation_instance(rng, sig, B, C, 8, mode)
        ref = activation_reference(x, cfg)
        assert max_abs_error(activation_specialized(x, cfg), ref) <= 1e-5
        t_base = median_time(lambda: activation_reference(x, cfg), reps=5)
        t_fast = median_time(lambda: activation_specialized(x, cfg), reps=5)
        speedups[mode.name] = t_base / t_fast
        assert speedups[mode.name] >= 5.0, (
            f"{mode.name}: {speedups[mode.name]:.1f}x below the 5x floor"
        )
    pretty = ", ".join(f"{m} {s:.1f}x" for m, s in speedups.items())
    report(
        f"activation relative speedup at B*C=2^16, K=N_B=8: {pretty} (>= 5x required)"
    )


def test_bench_cli():
    # parity subcommand exits zero and is reproducible under a fixed seed
    runs = []
    for _ in range(2):
        proc = subprocess.run(
            [sys.executable, "-m", "mvkernels", "parity", "--seed", "0"],
            capture_output=True,
            text=True,
            timeout=600,
        )
        assert proc.returncode == 0, proc.stderr
        runs.append(proc.stdout)
    assert runs[0] == runs[1]

    # bench --csv emits the documented column set, stable under --seed
    import contextlib

    outputs = []
    for _ in range(2):
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = cli_main(
                [
                    "bench", "--kind", "conv2d", "--sig", "1,1", "--B", "8",
                    "--Cin", "2", "--Cout", "2", "--dimage", "6", "--dfilter", "2",
                    "--variants", "reference,kernelized,packed", "--W", "4",
                    "--reps", "3", "--verify", "--seed", "42",
                ]
            )
        assert code == 0
        outputs.append(buf.getvalue())
    rows = list(csv.reader(io.StringIO(outputs[0])))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 4

    def stable(text):
        rows = list(csv.reader(io.StringIO(text)))
        keep = [i for i, c in enumerate(rows[0]) if not c.endswith("_s")]
        return [[r[i] for i in keep] for r in rows]

    assert stable(outputs[0]) == stable(outputs[1])
    report(
        "bench CLI: parity exits 0 and reproduces byte-identical reports; "
        "bench --csv emits the documented columns deterministically under --seed"
    )
