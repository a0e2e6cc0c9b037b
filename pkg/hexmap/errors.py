"""
Exception hierarchy for hexmap.

Library code raises these; only the command-line entry point turns them
into exit codes.
"""

from typing import Optional


class HexmapError(Exception):
    """Base class for every error raised by hexmap."""


class ConfigError(HexmapError, ValueError):
    """Invalid scan configuration (bad flag, inconsistent options)."""


class TargetError(ConfigError):
    """Malformed target expression or identifier, or index out of range."""


class PortError(ConfigError):
    """Malformed port list."""


class FilterError(ConfigError):
    """Malformed allow/block list."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class CodecError(HexmapError, ValueError):
    """A packet could not be built (oversize payload, malformed qname)."""


class FactorizationError(HexmapError):
    """p - 1 could not be factored within the configured limits."""


class TransportError(HexmapError, OSError):
    """The packet transport could not be opened or failed while sending."""


class OutputError(HexmapError, OSError):
    """A result sink could not be opened or written."""


class ScanAborted(HexmapError):
    """
    A scan stopped on a fatal error.

    Attributes:
        stats: the partial ScanStats collected before the failure
    """

    def __init__(self, message: str, stats=None):
        super().__init__(message)
        self.stats = stats
