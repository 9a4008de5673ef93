"""
Dense tensor kernels

Tensors are float64 numpy arrays of shape (channels, height, width).
All functions are pure; padding is zero padding on every side.
"""
from typing import Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from models.filters import FilterBank
from utils.errors import ShapeError


def _as_tensor(x, name: str = "tensor") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeError(f"{name} must be (channels, height, width), got shape {x.shape}")
    return x


def pad_spatial(x: np.ndarray, pad_h: int, pad_w: int = None) -> np.ndarray:
    if pad_w is None:
        pad_w = pad_h
    if pad_h == 0 and pad_w == 0:
        return x
    return np.pad(x, ((0, 0), (pad_h, pad_h), (pad_w, pad_w)))


def _windows(xp: np.ndarray, kernel: Tuple[int, int], stride: int) -> np.ndarray:
    """(C, H_out, W_out, k_h, k_w) read-only view of strided windows"""
    win = sliding_window_view(xp, kernel, axis=(1, 2))
    return win[:, ::stride, ::stride]


def _correlate_raw(weights: np.ndarray, xp: np.ndarray, stride: int) -> np.ndarray:
    """Valid correlation of an already padded input"""
    win = _windows(xp, weights.shape[2:], stride)
    return np.ascontiguousarray(np.tensordot(weights, win, axes=([1, 2, 3], [0, 3, 4])))


def correlate(f: FilterBank, x: np.ndarray) -> np.ndarray:
    """
    Bottom-up filtering

    out[c][u] = sum_{c', tau} f[c][c'][tau] * x_padded[c'][u * stride + tau]

    Raises:
        ShapeError: channel mismatch or padded input smaller than the kernel
    """
    x = _as_tensor(x, "input")
    if x.shape[0] != f.in_channels:
        raise ShapeError(f"filter expects {f.in_channels} input channels, got {x.shape[0]}")
    k_h, k_w = f.kernel
    if x.shape[1] + 2 * f.pad < k_h or x.shape[2] + 2 * f.pad < k_w:
        raise ShapeError(f"padded input {x.shape[1:]} (pad {f.pad}) is smaller than kernel {f.kernel}")
    return _correlate_raw(f.weights, pad_spatial(x, f.pad), f.stride)


def convolve_transposed(f: FilterBank, z: np.ndarray, out_shape: Tuple[int, int, int]) -> np.ndarray:
    """
    Top-down filtering, the exact adjoint of correlate(f, .)

    The strided input is zero-interlaced, fully convolved with the
    180-degree rotated, channel-transposed kernel and cropped to out_shape.

    Raises:
        ShapeError: out_shape is not an input shape that correlate(f, .) maps onto z's shape
    """
    z = _as_tensor(z, "top-down input")
    channels, height, width = (int(d) for d in out_shape)
    if z.shape[0] != f.out_channels:
        raise ShapeError(f"filter produces {f.out_channels} channels, got {z.shape[0]}")
    if channels != f.in_channels:
        raise ShapeError(f"out_shape has {channels} channels, filter consumes {f.in_channels}")
    if f.output_dims(height, width) != z.shape[1:]:
        raise ShapeError(f"out_shape {tuple(out_shape)} is inconsistent with input {z.shape} "
                         f"under stride {f.stride}, pad {f.pad}, kernel {f.kernel}")

    k_h, k_w = f.kernel
    s = f.stride
    full_h = (z.shape[1] - 1) * s + 1
    full_w = (z.shape[2] - 1) * s + 1
    zi = interlace_zeros(z, s, (full_h, full_w))
    rotated = f.weights.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    full = _correlate_raw(rotated, pad_spatial(zi, k_h - 1, k_w - 1), 1)

    canvas = np.zeros((channels, height + 2 * f.pad, width + 2 * f.pad))
    canvas[:, :full.shape[1], :full.shape[2]] = full
    return np.ascontiguousarray(canvas[:, f.pad:f.pad + height, f.pad:f.pad + width])


def correlate_filter_grad(f: FilterBank, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """d<correlate(f, x), grad_out>/df, shaped like f.weights"""
    x = _as_tensor(x, "input")
    grad_out = _as_tensor(grad_out, "output gradient")
    win = _windows(pad_spatial(x, f.pad), f.kernel, f.stride)
    win = win[:, :grad_out.shape[1], :grad_out.shape[2]]
    return np.tensordot(grad_out, win, axes=([1, 2], [1, 2]))


def interlace_zeros(z: np.ndarray, stride: int, target: Tuple[int, int]) -> np.ndarray:
    """
    Place z[u] at position u * stride, zeros elsewhere

    Raises:
        ShapeError: ceil(target / stride) differs from z's spatial size
    """
    z = _as_tensor(z)
    t_h, t_w = (int(t) for t in target)
    if stride < 1:
        raise ShapeError(f"stride must be positive, got {stride}")
    if (t_h + stride - 1) // stride != z.shape[1] or (t_w + stride - 1) // stride != z.shape[2]:
        raise ShapeError(f"target {(t_h, t_w)} is incompatible with {z.shape[1:]} at stride {stride}")
    if stride == 1:
        return z.copy()
    out = np.zeros((z.shape[0], t_h, t_w))
    out[:, ::stride, ::stride] = z
    return out


def subsample(x: np.ndarray, stride: int) -> np.ndarray:
    """out[u] = x[u * stride]"""
    x = _as_tensor(x)
    if stride < 1:
        raise ShapeError(f"stride must be positive, got {stride}")
    return np.ascontiguousarray(x[:, ::stride, ::stride])


def rectify(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def max_pool(x: np.ndarray, group: Tuple[int, int]) -> np.ndarray:
    """Max over non-overlapping g_h x g_w windows that tile x"""
    x = _as_tensor(x)
    g_h, g_w = group
    c, h, w = x.shape
    if h % g_h or w % g_w:
        raise ShapeError(f"pooling windows {group} do not tile {x.shape[1:]}")
    return x.reshape(c, h // g_h, g_h, w // g_w, g_w).max(axis=(2, 4))


def upsample_nearest(x: np.ndarray, factor: Tuple[int, int]) -> np.ndarray:
    f_h, f_w = factor
    return np.repeat(np.repeat(x, f_h, axis=1), f_w, axis=2)


def sum_pool(x: np.ndarray, factor: Tuple[int, int]) -> np.ndarray:
    """Adjoint of upsample_nearest"""
    f_h, f_w = factor
    c, h, w = x.shape
    return x.reshape(c, h // f_h, f_h, w // f_w, f_w).sum(axis=(2, 4))
