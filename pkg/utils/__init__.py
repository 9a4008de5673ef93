from .validators import validate_layer_spec, validate_taps, validate_positive, validate_probability
from .formatters import format_fraction, format_percent, format_table, format_eval_report
from .errors import (
    RGNetError, ShapeError, ScaleError, ConfigError, FormatError,
    VersionMismatchError, ArchitectureMismatchError,
)

__all__ = [
    'validate_layer_spec', 'validate_taps', 'validate_positive', 'validate_probability',
    'format_fraction', 'format_percent', 'format_table', 'format_eval_report',
    'RGNetError', 'ShapeError', 'ScaleError', 'ConfigError', 'FormatError',
    'VersionMismatchError', 'ArchitectureMismatchError',
]
