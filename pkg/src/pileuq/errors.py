"""Exception hierarchy.

Two broad families matter to callers: ``ValidationError`` for malformed
inputs, files, or configuration (CLI exit code 2) and ``NumericalError`` for
failures of the numerics themselves (CLI exit code 3).
"""


class PileUqError(Exception):
    """Base class for all package errors."""


class ValidationError(PileUqError):
    """Bad inputs, files, or configuration."""


class NumericalError(PileUqError):
    """A numerical procedure failed or produced a degenerate result."""


class ConfigError(ValidationError):
    pass


class IoFailure(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class OutOfSupport(ValidationError):
    pass


class SchemaInvalid(ValidationError):
    pass


class VersionMismatch(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    pass


class DegenerateData(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class DegenerateTarget(NumericalError):
    pass


class AllModelsDegenerate(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class InvalidInit(NumericalError):
    pass


class EmptyChain(NumericalError):
    pass


class EmptySamples(NumericalError):
    pass


class DegenerateSamples(NumericalError):
    pass
