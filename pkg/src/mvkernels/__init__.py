"""Single-core inference kernels for Clifford neural layers.

Reference oracles, baseline formulations and packed signature-specialized
implementations of k-D Clifford convolution, Clifford linear layers and
multivector activation layers, plus a benchmark CLI (``mvkernels``).
"""

from .algebra import (
    BladeProductTable,
    Signature,
    all_valid_signatures,
    basis_blade,
    blade_label,
    blade_product,
    cayley_tensor,
    geometric_product,
    multivector_add,
    product_table,
    validate_signature,
)
from .specialize import (
    FmaTerm,
    OpSchedule,
    apply_schedule,
    build_schedule,
    schedule_flop_count,
    schedule_for,
    schedule_to_text,
)
from .layout import (
    Dims,
    LayoutTag,
    pack_filters,
    pack_input,
    read_tensor,
    unpack_output,
    write_tensor,
)
from .conv import (
    ConvLayer,
    build_expanded_kernel,
    conv_flops,
    conv_forward,
    conv_kernelized,
    conv_packed,
    conv_reference,
    default_vector_width,
    make_conv_layer,
)
from .linear import (
    LinearLayer,
    linear_blade_gemm,
    linear_flops,
    linear_forward,
    linear_reference,
    make_linear_layer,
)
from .activation import (
    ActivationConfig,
    AggMode,
    activation_flops,
    activation_forward,
    activation_hoisted,
    activation_packed,
    activation_reference,
    activation_specialized,
    gather_vpack,
    gate_preactivation,
    make_activation_config,
    sigmoid,
)
from .bench import (
    BenchConfig,
    BenchRecord,
    ParityReport,
    PlotSpec,
    emit_csv,
    emit_plot,
    local_operation_intensity,
    max_abs_error,
    max_rel_error,
    parity_report,
    parse_csv,
    run_sweep,
)
from . import errors

__version__ = "0.1.0"
