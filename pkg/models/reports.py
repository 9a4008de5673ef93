"""Evaluation report types"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional


@dataclass
class PRPoint:
    threshold: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


@dataclass
class EvalReport:
    """
    pck maps alpha -> {'all': fraction, <keypoint id>: fraction}
    pr_curve is sorted by ascending threshold
    """
    pck: Dict[float, Dict[str, float]] = field(default_factory=dict)
    pr_curve: List[PRPoint] = field(default_factory=list)
    recall_at_p80: float = 0.0
    mean_error_visible: float = float('nan')
    mean_error_all: float = float('nan')
    pck_curve: List[tuple] = field(default_factory=list)
    k: int = 1
    n_samples: int = 0
    operating_point: Optional[PRPoint] = None
