"""Exception types shared across the library."""


class LayoutConflictError(ValueError):
    """Tensor operands share a subsystem label."""


class DegenerateLayoutError(ValueError):
    """An operation would leave no subsystems behind."""


class DimensionMismatchError(ValueError):
    """Vector or matrix dimensions do not fit the target subsystems."""


class NonOrthonormalBasisError(ValueError):
    """Basis vectors violate the orthonormality tolerance."""


class NotAProjectorError(ValueError):
    """Matrix is not Hermitian idempotent within tolerance."""


class InvalidDecompositionError(ValueError):
    """Projector family is not a decomposition of the identity."""


class ObservableMismatchError(ValueError):
    """Consecutive chain links disagree about the observable being read."""


class DressingError(ValueError):
    """Dressing unitary is invalid or leaks outside its pointer range."""


class UndefinedConditionalError(ValueError):
    """Conditioning event has (numerically) zero probability."""


class ZeroSampleError(RuntimeError):
    """A sampling run accepted no events."""
