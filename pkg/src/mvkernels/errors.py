"""Exception types shared across the library."""


class MvkernelsError(Exception):
    """Base class for every error this library raises on purpose."""


class InvalidSignature(MvkernelsError):
    """Signature rejected: all metric elements are zero."""


class InvalidMetricValue(MvkernelsError):
    """Signature rejected: a metric element lies outside {-1, 0, +1}."""


class DimensionMismatch(MvkernelsError):
    """Multivector operands disagree on blade count."""


class ShapeMismatch(MvkernelsError):
    """A tensor does not have the shape the layer expects."""


class BatchNotDivisible(MvkernelsError):
    """Batch size is not a multiple of the package length."""

    def __init__(self, batch, package_length):
        super().__init__(
            f"batch size {batch} is not divisible by package length {package_length}"
        )
        self.batch = batch
        self.package_length = package_length


class ModeConfigMismatch(MvkernelsError):
    """Activation weight/bias supplied or omitted contrary to the aggregation mode."""


class IndexOutOfRange(MvkernelsError):
    """A kernel blade index lies outside [0, N_B)."""


class SpecializationPreconditionViolated(MvkernelsError):
    """Specialized activation path needs K == N_B (4 or 8) and C divisible by 8."""


class ConfigInvalid(MvkernelsError):
    """Benchmark configuration failed validation."""


class VerificationFailed(MvkernelsError):
    """A benchmark variant disagreed with the reference beyond tolerance."""


class AxisMismatch(MvkernelsError):
    """Plot request is incompatible with the given records."""
