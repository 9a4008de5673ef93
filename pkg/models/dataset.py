"""Keypoint dataset types"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from config import (
    DEFAULT_N_SAMPLES, DEFAULT_IMAGE_SIZE, DEFAULT_N_KEYPOINTS, DEFAULT_OCCLUSION_RATE,
    DEFAULT_AMBIGUITY, DEFAULT_NOISE_STD, DEFAULT_SEED,
)
from utils.constants import JOINTS
from utils.errors import ConfigError
from utils.validators import validate_probability


@dataclass
class Sample:
    """
    One image with M keypoints

    image: (channels, S, S) float64 holding float32-representable values
    keypoints: (M, 2) array of (x, y) pixel coordinates
    visibility: (M,) bool
    """
    image: np.ndarray
    keypoints: np.ndarray
    visibility: np.ndarray

    @property
    def image_size(self) -> int:
        return self.image.shape[-1]

    @property
    def n_keypoints(self) -> int:
        return self.keypoints.shape[0]

    def equals(self, other: 'Sample') -> bool:
        return (np.array_equal(self.image, other.image)
                and np.array_equal(self.keypoints, other.keypoints)
                and np.array_equal(self.visibility, other.visibility))


@dataclass
class DatasetSpec:
    n_samples: int = DEFAULT_N_SAMPLES
    image_size: int = DEFAULT_IMAGE_SIZE
    n_keypoints: int = DEFAULT_N_KEYPOINTS
    occlusion_rate: float = DEFAULT_OCCLUSION_RATE
    ambiguity: float = DEFAULT_AMBIGUITY
    noise_std: float = DEFAULT_NOISE_STD
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        for name in ('occlusion_rate', 'ambiguity'):
            ok, message = validate_probability(getattr(self, name), name)
            if not ok:
                raise ConfigError(message)
        if not 1 <= self.n_keypoints <= len(JOINTS):
            raise ConfigError(f"n_keypoints must be between 1 and {len(JOINTS)}, got {self.n_keypoints}")
        if self.image_size < 8:
            raise ConfigError(f"image_size must be at least 8, got {self.image_size}")
        if self.n_samples < 0 or self.noise_std < 0:
            raise ConfigError("n_samples and noise_std must be nonnegative")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass
class Dataset:
    spec: DatasetSpec
    samples: List[Sample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, index):
        return self.samples[index]

    def equals(self, other: 'Dataset') -> bool:
        return (self.spec == other.spec and len(self) == len(other)
                and all(a.equals(b) for a, b in zip(self.samples, other.samples)))
