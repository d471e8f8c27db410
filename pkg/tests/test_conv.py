import numpy as np
import pytest

from mvkernels.algebra import Signature, geometric_product, product_table
from mvkernels.bench import max_rel_error, random_conv_instance
from mvkernels.conv import (
    _packed_conv_source,
    build_expanded_kernel,
    conv_flops,
    conv_forward,
    conv_kernelized,
    conv_packed,
    conv_reference,
    make_conv_layer,
)
from mvkernels.errors import BatchNotDivisible, ShapeMismatch
from mvkernels.layout import Dims
from mvkernels.specialize import schedule_for


def identity_layer(dims, sig, W=1, U=1):
    """Scalar-1 filter, zero bias: convolution becomes the identity."""
    assert dims.d_filter == 1
    f = np.zeros(dims.filters_shape(), dtype=np.float32)
    f[0] = np.eye(dims.C_in, dims.C_out, dtype=np.float32)[:, :, None]
    b = np.zeros(dims.bias_shape(), dtype=np.float32)
    return make_conv_layer(dims, sig, f, b, W=W, U=U)


class TestConvReference:
    def test_identity_filter(self, rng):
        dims = Dims(B=2, C_in=3, C_out=3, d_image=4, d_filter=1, k=2)
        layer = identity_layer(dims, Signature((1, 1)))
        x = rng.standard_normal(dims.input_shape()).astype(np.float32)
        np.testing.assert_allclose(conv_reference(x, layer), x, rtol=1e-6)

    def test_bias_broadcast(self, rng):
        dims = Dims(B=2, C_in=2, C_out=3, d_image=4, d_filter=2, k=1)
        sig = Signature((-1,))
        f = rng.standard_normal(dims.filters_shape()).astype(np.float32)
        bias = rng.standard_normal(dims.bias_shape()).astype(np.float32)
        layer = make_conv_layer(dims, sig, f, bias)
        out = conv_reference(np.zeros(dims.input_shape(), dtype=np.float32), layer)
        want = np.broadcast_to(bias.T[None, :, None, :], out.shape)
        np.testing.assert_allclose(out, want, atol=1e-7)

    def test_hand_expanded_two_tap(self, rng):
        # k=1, d_image=3, d_filter=2: out[p] = f[0]*x[p] + f[1]*x[p+1]
        dims = Dims(B=1, C_in=1, C_out=1, d_image=3, d_filter=2, k=1)
        sig = Signature((1,))
        table = product_table(sig)
        f = rng.standard_normal(dims.filters_shape()).astype(np.float32)
        bias = rng.standard_normal(dims.bias_shape()).astype(np.float32)
        x = rng.standard_normal(dims.input_shape()).astype(np.float32)
        layer = make_conv_layer(dims, sig, f, bias)
        out = conv_reference(x, layer)
        for p in range(2):
            want = (
                geometric_product(f[:, 0, 0, 0], x[0, 0, p], table)
                + geometric_product(f[:, 0, 0, 1], x[0, 0, p + 1], table)
                + bias[:, 0]
            )
            np.testing.assert_allclose(out[0, 0, p], want, rtol=1e-5, atol=1e-7)

    def test_shape_mismatch(self):
        dims = Dims(B=1, C_in=1, C_out=1, d_image=3, d_filter=2, k=1)
        layer = identity_layer(
            Dims(B=1, C_in=1, C_out=1, d_image=3, d_filter=1, k=1), Signature((1,))
        )
        with pytest.raises(ShapeMismatch):
            conv_reference(np.zeros((1, 1, 5, 2), dtype=np.float32), layer)


class TestExpandedKernel:
    def test_k1_blade_block_pattern(self, rng):
        # For g=(1): output blade 0 takes f0*x0 + f1*x1, blade 1 takes
        # f0*x1 + f1*x0, i.e. the 2x2 block [[f0, f1], [f1, f0]].
        dims = Dims(B=1, C_in=1, C_out=1, d_image=2, d_filter=1, k=1)
        sig = Signature((1,))
        f = rng.standard_normal(dims.filters_shape()).astype(np.float32)
        layer = make_conv_layer(dims, sig, f, np.zeros((2, 1), dtype=np.float32))
        kern = build_expanded_kernel(layer)
        f0, f1 = f[0, 0, 0, 0], f[1, 0, 0, 0]
        np.testing.assert_array_equal(kern[:, :, 0], [[f0, f1], [f1, f0]])

    def test_blade_block_from_table(self, rng):
        sig = Signature((1, -1))
        table = product_table(sig)
        dims = Dims(B=1, C_in=2, C_out=2, d_image=2, d_filter=2, k=2)
        f = rng.standard_normal(dims.filters_shape()).astype(np.float32)
        layer = make_conv_layer(dims, sig, f, np.zeros((4, 2), dtype=np.float32))
        kern = build_expanded_kernel(layer)
        nb = 4
        for co in range(2):
            for t in range(nb):
                for ci in range(2):
                    for j in range(nb):
                        i = t ^ j
                        want = table.coeff[i, j] * f[i, ci, co, :]
                        np.testing.assert_allclose(
                            kern[co * nb + t, ci * nb + j, :], want, atol=1e-7
                        )

    def test_nb_fold_memory_duplication(self, rng):
        dims = Dims(B=1, C_in=2, C_out=3, d_image=4, d_filter=2, k=2)
        _, layer = random_conv_instance(rng, dims, Signature((1, 0)))
        kern = build_expanded_kernel(layer)
        assert kern.shape == (3 * 4, 2 * 4, 4)
        assert kern.nbytes == dims.n_blades * layer.filters.nbytes


class TestVariantEquivalence:
    @pytest.mark.parametrize("k,d_image,d_filter", [(1, 9, 3), (2, 6, 2), (3, 4, 2)])
    def test_three_way_small(self, rng, k, d_image, d_filter):
        g = tuple(int(v) for v in rng.choice([-1, 0, 1], size=k))
        sig = Signature(g if any(g) else (1,) * k)
        dims = Dims(B=8, C_in=2, C_out=2, d_image=d_image, d_filter=d_filter, k=k)
        x, layer = random_conv_instance(rng, dims, sig, W=4, U=1)
        ref = conv_reference(x, layer)
        assert max_rel_error(conv_kernelized(x, layer), ref) <= 1e-5
        assert max_rel_error(conv_forward(x, layer, "packed"), ref) <= 1e-4
        assert max_rel_error(conv_forward(x, layer, "specialized"), ref) <= 1e-4

    def test_degenerate_package_parameters(self, rng):
        # L = W = U = 1 degenerates to a scalar specialized convolution.
        dims = Dims(B=3, C_in=2, C_out=2, d_image=5, d_filter=2, k=1)
        x, layer = random_conv_instance(rng, dims, Signature((-1,)), W=1, U=1)
        ref = conv_reference(x, layer)
        assert max_rel_error(conv_forward(x, layer, "packed"), ref) <= 1e-4
        assert max_rel_error(conv_forward(x, layer, "specialized"), ref) <= 1e-4

    def test_unroll_changes_nothing(self, rng):
        dims = Dims(B=16, C_in=2, C_out=3, d_image=6, d_filter=3, k=2)
        sig = Signature((1, -1))
        x, layer = random_conv_instance(rng, dims, sig, W=4, U=2)
        assert layer.L == 8
        ref = conv_reference(x, layer)
        assert max_rel_error(conv_forward(x, layer, "packed"), ref) <= 1e-4
        assert max_rel_error(conv_forward(x, layer, "specialized"), ref) <= 1e-4


class TestConvProperties:
    def test_linearity_in_input(self, rng):
        dims = Dims(B=4, C_in=2, C_out=2, d_image=5, d_filter=2, k=2)
        sig = Signature((1, 1))
        f = (rng.standard_normal(dims.filters_shape()) * 0.1).astype(np.float32)
        layer = make_conv_layer(dims, sig, f, np.zeros(dims.bias_shape()), W=2)
        x = rng.standard_normal(dims.input_shape()).astype(np.float32)
        y = rng.standard_normal(dims.input_shape()).astype(np.float32)
        lhs = conv_forward(2.0 * x + 0.5 * y, layer, "packed")
        rhs = 2.0 * conv_forward(x, layer, "packed") + 0.5 * conv_forward(y, layer, "packed")
        assert max_rel_error(lhs, rhs) <= 1e-4

    def test_translation_consistency_1d(self, rng):
        dims = Dims(B=2, C_in=1, C_out=1, d_image=8, d_filter=3, k=1)
        x, layer = random_conv_instance(rng, dims, Signature((1,)))
        full = conv_reference(x, layer)
        cropped_dims = Dims(B=2, C_in=1, C_out=1, d_image=7, d_filter=3, k=1)
        crop_layer = make_conv_layer(
            cropped_dims, layer.sig, layer.filters, layer.bias
        )
        cropped = conv_reference(np.ascontiguousarray(x[:, :, 1:, :]), crop_layer)
        np.testing.assert_allclose(cropped, full[:, :, 1:, :], rtol=1e-6, atol=1e-7)

    def test_translation_consistency_2d(self, rng):
        dims = Dims(B=1, C_in=1, C_out=2, d_image=6, d_filter=2, k=2)
        x, layer = random_conv_instance(rng, dims, Signature((1, -1)))
        full = conv_reference(x, layer).reshape(1, 2, 5, 5, 4)
        xs = x.reshape(1, 1, 6, 6, 4)
        shifted = np.ascontiguousarray(xs[:, :, 1:, 1:, :]).reshape(1, 1, 25, 4)
        crop_dims = Dims(B=1, C_in=1, C_out=2, d_image=5, d_filter=2, k=2)
        crop_layer = make_conv_layer(crop_dims, layer.sig, layer.filters, layer.bias)
        cropped = conv_reference(shifted, crop_layer).reshape(1, 2, 4, 4, 4)
        np.testing.assert_allclose(cropped, full[:, :, 1:, 1:, :], rtol=1e-6, atol=1e-7)


class TestPackedPreconditions:
    def test_batch_not_divisible(self, rng):
        dims = Dims(B=4, C_in=1, C_out=1, d_image=3, d_filter=1, k=1)
        x, layer = random_conv_instance(rng, dims, Signature((1,)), W=8, U=1)
        with pytest.raises(BatchNotDivisible):
            conv_forward(x, layer, "packed")

    def test_packed_shape_checked(self, rng):
        dims = Dims(B=8, C_in=1, C_out=1, d_image=3, d_filter=1, k=1)
        _, layer = random_conv_instance(rng, dims, Signature((1,)), W=8, U=1)
        with pytest.raises(ShapeMismatch):
            conv_packed(np.zeros((1, 3, 1, 2, 4), dtype=np.float32), layer)

    def test_layer_validation(self):
        dims = Dims(B=1, C_in=1, C_out=1, d_image=3, d_filter=2, k=1)
        sig = Signature((1,))
        with pytest.raises(ShapeMismatch):
            make_conv_layer(dims, sig, np.zeros((4, 1, 1, 2)), np.zeros((2, 1)))
        with pytest.raises(ShapeMismatch):
            make_conv_layer(dims, Signature((1, 1)), np.zeros((2, 1, 1, 2)), np.zeros((2, 1)))


class TestVectorWidthDefault:
    def test_env_override(self, monkeypatch):
        from mvkernels.conv import ENV_VECTOR_WIDTH, default_vector_width

        monkeypatch.setenv(ENV_VECTOR_WIDTH, "4")
        assert default_vector_width() == 4
        monkeypatch.setenv(ENV_VECTOR_WIDTH, "0")
        with pytest.raises(ValueError):
            default_vector_width()
        monkeypatch.delenv(ENV_VECTOR_WIDTH)
        assert default_vector_width() in (1, 8)


class TestConvFlops:
    def test_unit_example(self):
        dims = Dims(B=1, C_in=1, C_out=1, d_image=1, d_filter=1, k=2)
        assert conv_flops(dims, schedule_for(Signature((1, 1)))) == 36

    def test_linear_in_batch(self):
        s = schedule_for(Signature((1, 1)))
        d1 = Dims(B=2, C_in=3, C_out=4, d_image=6, d_filter=2, k=2)
        d2 = Dims(B=4, C_in=3, C_out=4, d_image=6, d_filter=2, k=2)
        assert 2 * conv_flops(d1, s) == conv_flops(d2, s)

    def test_degenerate_signature_cheaper(self):
        dims = Dims(B=2, C_in=2, C_out=2, d_image=4, d_filter=2, k=2)
        dense = conv_flops(dims, schedule_for(Signature((1, 1))))
        sparse = conv_flops(dims, schedule_for(Signature((0, 1))))
        assert sparse < dense


class TestGeneratedSource:
    def test_no_allocation_anywhere(self):
        src = _packed_conv_source(schedule_for(Signature((1, 1))), 8)
        assert "np.empty" not in src and "np.zeros" not in src

    def test_number_of_fma_statements(self):
        for sig in [Signature((1, 1)), Signature((0, 1)), Signature((1, 1, 1))]:
            src = _packed_conv_source(schedule_for(sig), 4)
            # one fused statement per (output blade, lane)
            assert src.count("+=") == sig.n_blades * 4
