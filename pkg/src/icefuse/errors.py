"""Exception types shared across the engine.

Every recoverable failure mode has its own class so callers (and the CLI)
can map errors to exit codes without string matching.
"""


class IcefuseError(Exception):
    """Base class for all engine errors."""


class NonFiniteError(IcefuseError):
    """Input contains NaN or Inf."""


class ZeroVectorError(IcefuseError):
    """Vector has (near-)zero norm where a direction is required."""


class DimensionMismatchError(IcefuseError):
    """Operands do not share the required dimension."""


class EmptyInputError(IcefuseError):
    """A nonempty collection was required."""


class EmptyClassError(IcefuseError):
    """A class has no member embeddings."""


class InvalidSpecError(IcefuseError):
    """Generator or run parameters are out of range."""


class InvalidAxisError(IcefuseError):
    """Unknown or unusable ablation axis."""


class BundleError(IcefuseError):
    """Base class for bundle file failures."""


class BadMagicError(BundleError):
    """File does not start with the bundle magic bytes."""


class UnsupportedVersionError(BundleError):
    """Bundle format version is not supported by this reader."""


class ChecksumMismatchError(BundleError):
    """Stored checksum does not match the file contents."""


class InvariantViolationError(BundleError):
    """Bundle contents violate a structural invariant."""
