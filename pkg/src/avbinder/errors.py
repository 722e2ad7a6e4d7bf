"""Exception types shared across the package."""


class DataFormatError(ValueError):
    """A file does not conform to one of the binary/text formats we read."""


class BadMagicError(DataFormatError):
    """File starts with the wrong magic bytes."""


class UnsupportedVersionError(DataFormatError):
    """File declares a format version this build cannot read."""


class TruncatedPayloadError(DataFormatError):
    """Header and payload disagree about how much data the file holds."""


class DuplicateIdError(DataFormatError):
    """An item identifier occurs more than once."""


class NonFiniteValueError(DataFormatError):
    """A stored or to-be-stored value is NaN or infinite."""


class ZeroNormError(ValueError):
    """A vector expected to be normalizable has (near-)zero Euclidean norm."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite or absurdly large loss."""
