"""Exception hierarchy.

Errors fall in two families which the CLI maps to distinct exit codes:
configuration problems (:class:`ConfigError` and subclasses) and
input/format problems (:class:`FormatError` and subclasses).
"""


class VepipeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(VepipeError):
    """The requested processing configuration cannot be run."""


class InvalidConfig(ConfigError):
    """A network descriptor violates one of its invariants."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class ManifestError(ConfigError):
    """A model directory manifest is missing or malformed."""


class UnsupportedColorspace(ConfigError):
    def __init__(self, colorspace):
        super().__init__(f"model has no variant for colorspace {colorspace}")
        self.colorspace = colorspace


class EngineUnavailable(ConfigError):
    """No inference engine adapter is registered for a manifest's engine."""


class LayoutError(VepipeError):
    """A frame-store layout was used for a batch it cannot represent."""


class CapacityError(VepipeError):
    """A frame store is too small for the requested placement."""


class ShapeError(VepipeError, ValueError):
    """Tensor shapes passed to an operator are inconsistent."""


class FormatError(VepipeError):
    """Input data is malformed or does not match the declared format."""


class ParseError(FormatError):
    def __init__(self, line_no, line):
        super().__init__(f"line {line_no}: cannot parse {line!r}")
        self.line_no = line_no
        self.line = line


class RangeError(FormatError, ValueError):
    """A frame index lies outside the valid range."""


class FormatMismatch(FormatError):
    """Frames in one stream differ in dimensions or pixel format."""


class DimensionError(FormatError, ValueError):
    """Frame dimensions are invalid for the requested pixel format."""


class BadSignature(FormatError):
    pass


class BadHeaderParam(FormatError):
    def __init__(self, tag, detail=""):
        msg = f"bad Y4M header parameter {tag!r}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.tag = tag


class TruncatedFrame(FormatError):
    def __init__(self, index, detail=""):
        msg = f"truncated frame {index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.index = index
