"""Exception hierarchy for ascivol.

Every error raised by the library derives from AscivolError so callers can
catch the whole family with one clause. Subclasses are grouped by the part
of the pipeline that raises them.
"""


class AscivolError(Exception):
    """Base class for all ascivol errors."""


# --- volume I/O ------------------------------------------------------------

class BadMagicError(AscivolError):
    """File is not a supported single-file NIfTI-1 ('n+1') container."""


class UnsupportedDatatypeError(AscivolError):
    """Header datatype code is outside the supported set."""


class UnsupportedDimsError(AscivolError):
    """Volume is not 3-D (dim[0] != 3)."""


class NonBinaryMaskError(AscivolError):
    """A grid declared binary contains values other than {0, 1}."""


class TruncatedFileError(AscivolError):
    """File ends before the header or the voxel payload is complete."""


class IoFailureError(AscivolError):
    """Underlying read/write failed (permissions, missing path, ...)."""


# --- preprocessing ---------------------------------------------------------

class EmptyInputError(AscivolError):
    """An operation that needs at least one value got none."""


class DimMismatchError(AscivolError):
    """Two grids that must share dimensions do not."""


class SpacingMismatchError(AscivolError):
    """Two grids that must share voxel spacing do not."""


class EmptyForegroundError(AscivolError):
    """A foreground mask selects no voxels."""


class ZeroSdError(AscivolError):
    """Normalization statistics with sd == 0 cannot be applied."""


# --- loss kernel -----------------------------------------------------------

class LengthMismatchError(AscivolError):
    """Paired vectors have different lengths."""


# --- quantification --------------------------------------------------------

class ZeroReferenceError(AscivolError):
    """Percent volume error is undefined for a zero reference volume."""


# --- statistics ------------------------------------------------------------

class TooFewSamplesError(AscivolError):
    """Not enough samples for the requested statistic."""


class ConstantInputError(AscivolError):
    """Correlation is undefined for a constant sequence."""


class InvalidParameterError(AscivolError):
    """A statistical parameter is outside its valid range."""


class EmptyMatrixError(AscivolError):
    """A confusion matrix with no cases has no metrics."""


# --- phantoms --------------------------------------------------------------

class OverlappingPocketsError(AscivolError):
    """Fluid pockets overlap; the analytic volume would double-count."""


class PocketOutsideBodyError(AscivolError):
    """A fluid pocket is not contained in the body ellipsoid."""


class InvalidBandError(AscivolError):
    """An HU band with lo >= hi is not a band."""


# --- active learning -------------------------------------------------------

class KTooLargeError(AscivolError):
    """Requested more selections than there are scored scans."""


class UnknownIdError(AscivolError):
    """A scan id is not in the unlabeled pool."""


class AlreadyLabeledError(AscivolError):
    """A scan id was already moved to the labeled pool."""


# --- reporting / CLI -------------------------------------------------------

class ManifestError(AscivolError):
    """The case manifest is missing, malformed, or empty."""


class UnsupportedFormatError(AscivolError):
    """Unknown report serialization format."""
