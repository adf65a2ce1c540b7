"""Exception taxonomy shared across the package.

Validation and numeric problems raise subclasses of DistilRobustError;
I/O problems raise DataError (or builtins like OSError from the stdlib).
The CLI maps these onto stable exit codes.
"""


class DistilRobustError(Exception):
    """Base class for all library errors."""


class WavFormatError(DistilRobustError):
    """Malformed RIFF/WAVE container."""


class UnsupportedWavError(WavFormatError):
    """Structurally valid WAV whose codec/width is not supported."""


class SampleRateError(DistilRobustError):
    """Operands carry different sample rates."""


class DegenerateSignalError(DistilRobustError):
    """Signal has no energy where energy is required (zero RMS, all-zero taps)."""


class ShapeError(DistilRobustError):
    """Tensor/array operands have incompatible shapes."""


class ParameterError(DistilRobustError):
    """An operation argument is out of its valid range."""


class ConfigError(DistilRobustError):
    """Invalid or inconsistent configuration."""


class NumericError(DistilRobustError):
    """Non-finite value where a finite one is required."""


class DataError(DistilRobustError):
    """Problem locating or loading user-supplied data files."""
