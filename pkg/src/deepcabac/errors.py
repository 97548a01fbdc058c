"""Exception hierarchy shared by the codec modules."""


class DeepCabacError(Exception):
    """Base class for every error raised by this package."""


class ContractError(DeepCabacError, ValueError):
    """An argument violates an operation's precondition."""


class LevelRangeError(ContractError):
    """A quantization level cannot be represented by the binarization."""


class TruncatedStreamError(DeepCabacError):
    """A reader ran past the end of its buffer."""


class CorruptStreamError(DeepCabacError):
    """Stream content is inconsistent with the format."""


class FormatError(DeepCabacError):
    """Container-level parse failure."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class TruncationError(FormatError, TruncatedStreamError):
    """Container ended early; ``tensor`` names the record being read, if any."""

    def __init__(self, message, tensor=None):
        super().__init__(message)
        self.tensor = tensor


class ChecksumError(FormatError, CorruptStreamError):
    def __init__(self, message, tensor=None):
        super().__init__(message)
        self.tensor = tensor


class IngestionError(DeepCabacError):
    """Input arrays, importance maps or manifests could not be loaded."""
