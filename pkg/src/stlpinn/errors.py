"""Exception taxonomy shared across the package.

Everything numerical raises a subclass of :class:`StlError` so the CLI can
map any solver/transfer failure to a single exit code.
"""


class StlError(Exception):
    """Base class for all package-specific failures."""


# --- linear algebra ---------------------------------------------------------

class SingularMatrix(StlError):
    pass


class NotSymmetric(StlError):
    pass


class NotPositiveDefinite(StlError):
    pass


class DimensionMismatch(StlError):
    pass


# --- network / training -----------------------------------------------------

class InvalidWidths(StlError):
    pass


class NonFiniteLoss(StlError):
    pass


class ShapeMismatch(StlError):
    pass


class InvalidCounts(StlError):
    pass


class Diverged(StlError):
    pass


# --- equations ---------------------------------------------------------------

class UnknownFamily(StlError):
    pass


class InvalidAlpha(StlError):
    pass


class Unsupported(StlError):
    pass


class ZeroEigenvalue(StlError):
    pass


class RepeatedRoot(StlError):
    pass


class ResonantFrequency(StlError):
    pass


class OutOfDomain(StlError):
    pass


class AlreadyLinear(UserWarning):
    """Warning (not an error): linearizing a spec that is already linear."""


# --- transfer ----------------------------------------------------------------

class GeometryMismatch(StlError):
    pass


class SingularM(StlError):
    pass


class InvalidOrder(StlError):
    pass


class NonFiniteSeries(StlError):
    pass


# --- reference solvers -------------------------------------------------------

class StepUnderflow(StlError):
    pass


class MaxStepsExceeded(StlError):
    pass


class NewtonDivergence(StlError):
    pass


class CFLViolation(StlError):
    pass


# --- bench / IO --------------------------------------------------------------

class ZeroReference(StlError):
    pass


class IoError(StlError):
    pass


class SchemaVersionMismatch(StlError):
    pass


class CorruptFloatArray(StlError):
    pass


class ConfigError(StlError):
    pass
