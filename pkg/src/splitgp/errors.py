"""Exception types shared across the package."""


class SplitgpError(Exception):
    """Base class for all package-specific errors."""


class DomainError(SplitgpError):
    """An operation was evaluated outside its physical domain (e.g. v_x below
    the slip-angle guard, or a plant state outside the safety envelope)."""


class NumericalError(SplitgpError):
    """A factorization or aggregation failed numerically (ill-conditioned
    kernel matrix, non-positive committee precision, ...)."""


class OutOfRegion(SplitgpError):
    """A feature point lies outside the partition's bounding box."""


class CapExceeded(SplitgpError):
    """The dense full-GP oracle was asked to handle more samples than its cap."""


class ConfigError(SplitgpError):
    """A scenario configuration file is missing, malformed, or inconsistent."""


class SchemaError(SplitgpError):
    """A log or store file does not match the expected schema version."""


class SolverFailure(SplitgpError):
    """The QP solver could not produce a usable iterate."""


class CrashDetected(SplitgpError):
    """The simulated vehicle left the safe envelope during a closed-loop run."""
