"""Exception types shared across the toolkit."""


class ConstructionError(ValueError):
    """A schedule or model could not be built from the given parameters."""


class CodecError(Exception):
    """Base class for codec failures."""


class DecodeError(CodecError):
    """Malformed or corrupt bitstream.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnsupportedSizeError(CodecError):
    """Image dimensions outside the 16-bit header range."""


class TrainingError(RuntimeError):
    """Training diverged or produced non-finite values."""


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""
