"""Filter bank type"""
from dataclasses import dataclass

import numpy as np

from utils.errors import ShapeError


@dataclass
class FilterBank:
    """
    Convolution weights of shape (out_channels, in_channels, k_h, k_w)

    stride is 1 or 2, pad is the number of zeros added on every side.
    """
    weights: np.ndarray
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 4:
            raise ShapeError(f"filter weights must be 4-d (out, in, kh, kw), got shape {self.weights.shape}")
        if self.stride not in (1, 2):
            raise ShapeError(f"stride must be 1 or 2, got {self.stride}")
        if self.pad < 0:
            raise ShapeError(f"pad must be nonnegative, got {self.pad}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel(self) -> tuple:
        return self.weights.shape[2], self.weights.shape[3]

    def output_dims(self, height: int, width: int) -> tuple:
        """Spatial size of correlate(self, x) for an input of the given size"""
        k_h, k_w = self.kernel
        out_h = (height + 2 * self.pad - k_h) // self.stride + 1
        out_w = (width + 2 * self.pad - k_w) // self.stride + 1
        return out_h, out_w

    def copy(self) -> 'FilterBank':
        return FilterBank(self.weights.copy(), self.stride, self.pad)
