"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class KscError(Exception):
    exit_code = 1


class ParameterError(KscError, ValueError):
    """Invalid numeric or enumerated parameter (block size, STFT params, budget...)."""

    exit_code = 3


class DimensionError(KscError, ValueError):
    """Signal dimensions incompatible with the requested block/patch size."""

    exit_code = 4


class KeyMismatchError(KscError, ValueError):
    """Key mode or size does not match the signal, block spec or kernel."""

    exit_code = 5


class WrongCipherError(KeyMismatchError):
    """Decrypting with a key of the other cipher family."""


class FormatError(KscError, ValueError):
    """Malformed file or text payload."""

    exit_code = 6


class KeyParseError(FormatError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class StructuralError(KscError, ValueError):
    """Inconsistent BlockGrid metadata."""

    exit_code = 7


class DegenerateRangeError(ParameterError):
    """Constant input where an affine range is required."""
