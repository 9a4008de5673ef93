"""Validators for run configuration values"""
import re

_LAYER_PATTERN = re.compile(r'^(\d+)/(\d+)/([12])/(-|\d+x\d+)(?:/(\d+))?$')


def validate_layer_spec(spec: str) -> tuple[bool, str]:
    """
    Validate one layer entry: out/kernel/stride/nms[/pad]
    - out: output channels (>= 1)
    - kernel: odd square kernel size
    - stride: 1 or 2
    - nms: '-' for a plain layer or GxG for NMS groups
    - pad: optional, defaults to kernel // 2

    Returns: (is_valid, error_message)
    """
    if not spec:
        return False, "Layer spec is empty"

    match = _LAYER_PATTERN.match(spec.strip())
    if not match:
        return False, f"Layer spec '{spec}' must look like out/kernel/stride/nms[/pad], e.g. 16/3/2/2x2"

    out, kernel = int(match.group(1)), int(match.group(2))
    if out < 1:
        return False, f"Layer '{spec}': at least one output channel is required"
    if kernel < 1 or kernel % 2 == 0:
        return False, f"Layer '{spec}': kernel size must be odd"
    if match.group(4) != '-':
        g_h, g_w = (int(g) for g in match.group(4).split('x'))
        if g_h < 1 or g_w < 1:
            return False, f"Layer '{spec}': NMS group must be at least 1x1"

    return True, ""


def validate_taps(spec: str, n_layers: int) -> tuple[bool, str]:
    """
    Validate a comma-separated tap list (coarse to fine, distinct layers below the top)

    Returns: (is_valid, error_message)
    """
    if not spec or not spec.strip():
        return True, ""  # No taps: coarse head only

    parts = [p.strip() for p in spec.split(',')]
    if not all(p.isdigit() for p in parts):
        return False, f"Taps '{spec}' must be comma-separated layer numbers"

    layers = [int(p) for p in parts]
    if len(set(layers)) != len(layers):
        return False, "Taps must reference distinct layers"
    for layer in layers:
        if not 1 <= layer < n_layers:
            return False, f"Tap layer {layer} must be between 1 and {n_layers - 1}"
    if layers != sorted(layers, reverse=True):
        return False, "Taps must be ordered coarse to fine (descending layer numbers)"

    return True, ""


def validate_positive(value: float, name: str) -> tuple[bool, str]:
    if not value > 0:
        return False, f"{name} must be positive, got {value}"
    return True, ""


def validate_probability(value: float, name: str) -> tuple[bool, str]:
    if not 0.0 <= value <= 1.0:
        return False, f"{name} must be between 0 and 1, got {value}"
    return True, ""
