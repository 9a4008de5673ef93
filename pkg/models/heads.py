"""Multi-scale linear keypoint predictors"""
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from utils.errors import ShapeError


@dataclass
class Tap:
    """1x1 filter over one latent layer: weight (M, C_layer), bias (M,)"""
    layer: int
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(f"tap on layer {self.layer}: weight {self.weight.shape} / bias {self.bias.shape} mismatch")


@dataclass
class CoarseHead:
    """
    Spatially-varying head: a fully-connected map from the flattened top
    layer to an M x H_c x W_c logit grid
    """
    weight: np.ndarray        # (M * H_c * W_c, N_top)
    bias: np.ndarray          # (M, H_c, W_c)

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.bias.ndim != 3 or self.weight.shape[0] != self.bias.size:
            raise ShapeError(f"coarse head weight {self.weight.shape} does not match bias grid {self.bias.shape}")

    @property
    def grid(self) -> Tuple[int, int, int]:
        return self.bias.shape


@dataclass
class HeadBank:
    """
    Coarse head on the top layer plus 1x1 taps ordered coarse to fine

    taps[0] is the first tap added after the coarse head; the final
    heatmap resolution is that of taps[-1] (or the coarse grid when
    there are no taps).
    """
    coarse: CoarseHead
    taps: List[Tap] = field(default_factory=list)

    def __post_init__(self):
        layers = [t.layer for t in self.taps]
        if len(set(layers)) != len(layers):
            raise ShapeError(f"taps must reference distinct layers, got {layers}")
        for t in self.taps:
            if t.weight.shape[0] != self.n_keypoints:
                raise ShapeError(f"tap on layer {t.layer} predicts {t.weight.shape[0]} keypoints, "
                                 f"coarse head predicts {self.n_keypoints}")

    @property
    def n_keypoints(self) -> int:
        return self.coarse.bias.shape[0]

    @classmethod
    def zeros(cls, n_keypoints: int, top_size: int, coarse_grid: Tuple[int, int],
              taps: List[Tuple[int, int]]) -> 'HeadBank':
        """
        All-zero heads

        Args:
            n_keypoints: M
            top_size: number of variables in the top layer
            coarse_grid: (H_c, W_c)
            taps: (layer index, layer channels) pairs, coarse to fine
        """
        h_c, w_c = coarse_grid
        coarse = CoarseHead(np.zeros((n_keypoints * h_c * w_c, top_size)),
                            np.zeros((n_keypoints, h_c, w_c)))
        bank = [Tap(layer, np.zeros((n_keypoints, channels)), np.zeros(n_keypoints))
                for layer, channels in taps]
        return cls(coarse=coarse, taps=bank)

    def copy(self) -> 'HeadBank':
        return HeadBank(
            coarse=CoarseHead(self.coarse.weight.copy(), self.coarse.bias.copy()),
            taps=[Tap(t.layer, t.weight.copy(), t.bias.copy()) for t in self.taps],
        )

    def to_dict(self) -> dict:
        return {
            'n_keypoints': self.n_keypoints,
            'coarse_grid': list(self.coarse.grid[1:]),
            'taps': [t.layer for t in self.taps],
        }
