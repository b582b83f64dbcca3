"""Exception hierarchy shared by all fmlc modules."""


class FmlcError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FmlcError, ValueError):
    """An input violates a documented contract (shape, range, invariant)."""


class ShapeMismatchError(ValidationError):
    """Two grids that must share a shape do not."""


class ConfigError(FmlcError):
    """A CLI/pipeline configuration is unusable (missing file, bad key, ...)."""


class CoverageError(FmlcError):
    """Stitching input tiles leave part of the output extent uncovered."""


class TensorFormatError(FmlcError):
    """Base class for raw-tensor (.fmt) parse failures."""


class MalformedHeaderError(TensorFormatError):
    """Magic, header length, or JSON header of a .fmt file is invalid."""


class TruncatedPayloadError(TensorFormatError):
    """A .fmt payload is shorter than the header-declared shape requires."""


class ChecksumMismatchError(TensorFormatError):
    """The trailing CRC32 of a .fmt payload does not match its contents."""


class TiffError(FmlcError):
    """Base class for TIFF read/write failures."""


class MalformedTiffError(TiffError):
    """The file is not a parseable classic TIFF."""


class UnsupportedTiffError(TiffError):
    """The file is valid TIFF but uses a feature outside the supported subset."""


class TiffCapacityError(TiffError):
    """The label raster cannot be represented in a uint8 TIFF."""
