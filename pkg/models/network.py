"""Hierarchical Rectified Gaussian network structure"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from utils.errors import ShapeError
from .filters import FilterBank


@dataclass
class LayerConfig:
    """
    Geometry of one latent layer

    nms_group is the (g_h, g_w) extent of the disjoint lateral-inhibition
    windows, or None for a plain rectified layer. pad=None means "same"
    padding (kernel // 2).
    """
    in_channels: int
    out_channels: int
    kernel: Tuple[int, int] = (3, 3)
    stride: int = 1
    nms_group: Optional[Tuple[int, int]] = None
    pad: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.kernel, int):
            self.kernel = (self.kernel, self.kernel)
        self.kernel = tuple(int(k) for k in self.kernel)
        if isinstance(self.nms_group, int):
            self.nms_group = (self.nms_group, self.nms_group)
        if self.nms_group is not None:
            self.nms_group = tuple(int(g) for g in self.nms_group)
        if self.pad is None:
            self.pad = self.kernel[0] // 2
        if self.stride not in (1, 2):
            raise ShapeError(f"stride must be 1 or 2, got {self.stride}")

    def to_dict(self) -> dict:
        return {
            'in_channels': self.in_channels,
            'out_channels': self.out_channels,
            'kernel': list(self.kernel),
            'stride': self.stride,
            'nms_group': list(self.nms_group) if self.nms_group else None,
            'pad': self.pad,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'LayerConfig':
        return cls(
            in_channels=data['in_channels'],
            out_channels=data['out_channels'],
            kernel=tuple(data['kernel']),
            stride=data['stride'],
            nms_group=tuple(data['nms_group']) if data.get('nms_group') else None,
            pad=data['pad'],
        )


@dataclass
class RGNetwork:
    """
    Weights W and biases b of the layered quadratic energy

    filters[i - 1] connects layer i - 1 to layer i (layer 0 is the image).
    Self-weights are fixed at -1 and lateral inhibition is a hard
    constraint, so neither is stored.
    """
    layers: List[LayerConfig]
    filters: List[FilterBank]
    biases: List[np.ndarray]
    input_dims: Tuple[int, int, int]

    def __post_init__(self):
        self.input_dims = tuple(int(d) for d in self.input_dims)
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        if not (len(self.layers) == len(self.filters) == len(self.biases)):
            raise ShapeError("layers, filters and biases must have the same length")
        if not self.layers:
            raise ShapeError("network needs at least one latent layer")

        channels = self.input_dims[0]
        for i, (cfg, f, b) in enumerate(zip(self.layers, self.filters, self.biases), start=1):
            if cfg.in_channels != channels:
                raise ShapeError(f"layer {i}: expects {cfg.in_channels} input channels, previous layer has {channels}")
            expected = (cfg.out_channels, cfg.in_channels) + cfg.kernel
            if f.weights.shape != expected:
                raise ShapeError(f"layer {i}: filter shape {f.weights.shape} does not match config {expected}")
            if f.stride != cfg.stride or f.pad != cfg.pad:
                raise ShapeError(f"layer {i}: filter stride/pad ({f.stride}, {f.pad}) "
                                 f"differ from config ({cfg.stride}, {cfg.pad})")
            if b.shape != (cfg.out_channels,):
                raise ShapeError(f"layer {i}: bias shape {b.shape} should be ({cfg.out_channels},)")
            channels = cfg.out_channels

        for i, (cfg, shape) in enumerate(zip(self.layers, self.layer_shapes()), start=1):
            if shape[1] < 1 or shape[2] < 1:
                raise ShapeError(f"layer {i}: empty output {shape}")
            if cfg.nms_group is not None:
                g_h, g_w = cfg.nms_group
                if shape[1] % g_h or shape[2] % g_w:
                    raise ShapeError(f"layer {i}: NMS groups {g_h}x{g_w} do not tile layer of size "
                                     f"{shape[1]}x{shape[2]}")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def layer_shapes(self) -> List[Tuple[int, int, int]]:
        """(channels, height, width) of z_1 .. z_L"""
        shapes = []
        _, h, w = self.input_dims
        for f in self.filters:
            h, w = f.output_dims(h, w)
            shapes.append((f.out_channels, h, w))
        return shapes

    def n_latent(self) -> int:
        return int(sum(np.prod(s) for s in self.layer_shapes()))

    def copy(self) -> 'RGNetwork':
        return RGNetwork(
            layers=[LayerConfig.from_dict(c.to_dict()) for c in self.layers],
            filters=[f.copy() for f in self.filters],
            biases=[b.copy() for b in self.biases],
            input_dims=self.input_dims,
        )

    @classmethod
    def random(cls, layers: List[LayerConfig], input_dims: Tuple[int, int, int],
               rng: np.random.Generator, scale: float = 1.0, bias: float = 0.0) -> 'RGNetwork':
        """
        Draw filters from N(0, scale^2 * 2 / fan_in)

        Args:
            layers: layer geometry
            input_dims: (channels, height, width) of the image
            rng: seeded generator, the only source of randomness
            scale: multiplier on the He standard deviation
            bias: constant initial bias
        """
        filters, biases = [], []
        for cfg in layers:
            fan_in = cfg.in_channels * cfg.kernel[0] * cfg.kernel[1]
            std = scale * np.sqrt(2.0 / fan_in)
            w = rng.normal(0.0, std, size=(cfg.out_channels, cfg.in_channels) + cfg.kernel)
            filters.append(FilterBank(w, cfg.stride, cfg.pad))
            biases.append(np.full(cfg.out_channels, bias, dtype=np.float64))
        return cls(layers=layers, filters=filters, biases=biases, input_dims=input_dims)

    def to_dict(self) -> dict:
        return {
            'input_dims': list(self.input_dims),
            'layers': [c.to_dict() for c in self.layers],
        }


@dataclass
class DenseQP:
    """
    Explicit instance of max_{z >= 0} 1/2 z'Wz + b'z

    groups are disjoint index arrays in which at most one variable
    may be strictly positive.
    """
    W: np.ndarray
    b: np.ndarray
    groups: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.groups = [np.asarray(g, dtype=np.int64) for g in self.groups]
        n = self.b.shape[0]
        if self.W.shape != (n, n):
            raise ShapeError(f"W has shape {self.W.shape}, expected ({n}, {n})")
        if not np.allclose(self.W, self.W.T, rtol=0.0, atol=1e-12):
            raise ShapeError("W must be symmetric")
        seen = set()
        for g in self.groups:
            members = set(int(i) for i in g)
            if members & seen:
                raise ShapeError("groups must be disjoint")
            if any(i < 0 or i >= n for i in members):
                raise ShapeError("group index out of range")
            seen |= members

    @property
    def n(self) -> int:
        return self.b.shape[0]
