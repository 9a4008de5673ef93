"""Exception types raised by the rgnet services"""
from typing import Optional


class RGNetError(ValueError):
    """Base class for every error the services raise on bad input"""


class ShapeError(RGNetError):
    """Tensor or filter dimensions do not conform"""


class ScaleError(RGNetError):
    """Problem too large for a desk-scale routine"""


class ConfigError(RGNetError):
    """Run configuration document does not match the schema"""


class FormatError(RGNetError):
    """Binary file is malformed"""

    def __init__(self, message: str, offset: Optional[int] = None, section: str = ""):
        self.offset = offset
        self.section = section
        where = []
        if section:
            where.append(f"section '{section}'")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class VersionMismatchError(FormatError):
    """File format version is not the one this build reads"""

    def __init__(self, kind: str, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"{kind} version {found} is not supported (expected version {expected})",
                         offset=4, section="header")


class ArchitectureMismatchError(RGNetError):
    """Checkpoint parameters do not fit the requested architecture"""

    def __init__(self, layer: str, detail: str):
        self.layer = layer
        super().__init__(f"architecture mismatch at {layer}: {detail}")
