"""Inference result types"""
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


@dataclass
class InferenceTrace:
    """Per-layer activations z_1 .. z_L; states[i - 1] holds z_i"""
    states: List[np.ndarray]
    pass_log: Optional[List[List[np.ndarray]]] = None
    converged_gap: Optional[float] = None
    passes: int = 0

    def layer(self, i: int) -> np.ndarray:
        return self.states[i - 1]

    @property
    def n_layers(self) -> int:
        return len(self.states)

    def flatten(self) -> np.ndarray:
        """Latent vector in dense_expand ordering (layer, channel, row, column)"""
        return np.concatenate([s.ravel() for s in self.states])


@dataclass
class CoordinateDescentResult:
    z: np.ndarray
    sweeps_used: int
    converged: bool
    diverged: bool = False


@dataclass
class CopositivityVerdict:
    """Outcome of the simplex grid search; counterexample is None when none was found"""
    copositive: bool
    min_value: float
    counterexample: Optional[np.ndarray] = field(default=None)
    points_checked: int = 0
