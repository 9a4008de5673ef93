"""Training configuration and checkpoint types"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from config import (
    DEFAULT_LEARNING_RATE, DEFAULT_MOMENTUM, DEFAULT_WEIGHT_DECAY, DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS, DEFAULT_K, DEFAULT_LR_DECAY_PER_FINER_SCALE, DEFAULT_POSITIVE_RADIUS,
    DEFAULT_SEED,
)
from utils.errors import ConfigError
from .heads import HeadBank
from .network import RGNetwork


@dataclass
class TrainConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    momentum: float = DEFAULT_MOMENTUM
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = DEFAULT_EPOCHS
    k: int = DEFAULT_K
    lr_decay_per_finer_scale: float = DEFAULT_LR_DECAY_PER_FINER_SCALE
    positive_radius: float = DEFAULT_POSITIVE_RADIUS
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.lr_decay_per_finer_scale <= 0:
            raise ConfigError("lr_decay_per_finer_scale must be > 0")
        if self.positive_radius < 0:
            raise ConfigError("positive_radius must be >= 0")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")


@dataclass
class Checkpoint:
    net: RGNetwork
    heads: HeadBank
    k: int = DEFAULT_K
    epoch: Optional[int] = None
    velocity: Optional[Dict[str, np.ndarray]] = field(default=None)
    history: List["EpochRecord"] = field(default_factory=list)


@dataclass
class EpochRecord:
    stage: int
    epoch: int
    loss: float
    seconds: float
