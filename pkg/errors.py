"""
Exception hierarchy for the phipowers library.

Every failure a caller can act on has its own class. Precondition failures
derive from ValueError, numerical failures from RuntimeError, so code that
only knows the builtin exceptions still catches them.
"""


class PhiPowerError(Exception):
    """Root of all library errors."""


class GridError(PhiPowerError, ValueError):
    """Grid or sampled-function construction failed."""


class TableMismatch(GridError):
    """Tabulated nodes do not coincide with the grid nodes."""


class GridMismatch(PhiPowerError, ValueError):
    """Two objects built on different grids were combined."""


class NonvanishingViolation(PhiPowerError, ValueError):
    """A function that must be nonzero vanishes at a grid node."""

    def __init__(self, name, index, x, value):
        self.name = name
        self.index = int(index)
        self.x = float(x)
        self.value = value
        super().__init__(
            f"{name} vanishes at node {self.index} (x={self.x:.17g}, |value|={abs(value):.3e})"
        )


class GroundStateVanishes(NonvanishingViolation):
    """The particular solution or ground state has a zero on the grid."""


class JetOrderExceeded(PhiPowerError, ValueError):
    """More derivatives were requested than a sampled function carries."""


class InsufficientOrder(PhiPowerError, ValueError):
    """A power table is too short for the requested computation."""

    def __init__(self, message, required):
        self.required = int(required)
        super().__init__(f"{message} (required order {self.required})")


class ToleranceTooTight(PhiPowerError, ValueError):
    """A tolerance below what double precision can certify."""


class ParityMismatch(PhiPowerError, ValueError):
    """The derivative formula does not apply to this (k, n) combination."""


class RealPhiRequired(PhiPowerError, ValueError):
    """Operation needs a real-valued Φ."""


class PositivePhiRequired(PhiPowerError, ValueError):
    """Operation needs a real, strictly positive Φ."""


class OrderCapExceeded(PhiPowerError, ValueError):
    """Order above the supported cap."""


class ConditioningFailure(PhiPowerError, RuntimeError):
    """A determinant ratio is too ill-conditioned to trust."""


class NotAParticularSolution(PhiPowerError, ValueError):
    """u0 does not solve the homogeneous equation."""


class TruncationTooSmall(PhiPowerError, RuntimeError):
    """The series truncation cannot be certified for this spectral parameter."""

    def __init__(self, message, needed_k):
        self.needed_k = int(needed_k)
        super().__init__(f"{message} (needed K >= {self.needed_k})")


class NoRootsInRange(PhiPowerError, RuntimeError):
    """No sign change of the characteristic function in the scan range."""


class IdentityNotMaterializable(PhiPowerError, ValueError):
    """The composition identity (zeroth kernel power) has no array form."""


class DivergenceSuspected(PhiPowerError, RuntimeError):
    """Neumann terms keep growing where factorial decay is expected."""


class ConfigError(PhiPowerError, ValueError):
    """Invalid run configuration."""

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
