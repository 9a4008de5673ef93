"""Recurrence-depth study: identical models trained and tested with different k"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from config import DEFAULT_PCK_ALPHAS
from models.dataset import Sample
from models.reports import EvalReport
from .evaluation import evaluate_model
from .run_config import RunConfig, build_model, with_k, with_seed
from .training import train

logger = logging.getLogger(__name__)


@dataclass
class DepthRow:
    k: int
    pck: float
    pck_std: float
    recall_at_p80: float
    n_seeds: int


def _shares_coarse_stage(k: int) -> bool:
    # with at most one descending pass the top layer is written once, so
    # coarse-only training does not depend on k
    return k <= 2


def run_depth_study(train_set: Sequence[Sample], test_set: Sequence[Sample], cfg: RunConfig,
                    ks: Sequence[int] = (1, 2, 3, 4), seeds: Sequence[int] = (0,),
                    alphas: Sequence[float] = DEFAULT_PCK_ALPHAS) -> Dict[int, List[EvalReport]]:
    """
    Train one model per (k, seed) from the same seeded initialization and evaluate it with the same k

    For k <= 2 the coarse-only stage is trained once per seed and each k
    continues from it; the result equals training that k from scratch.

    Returns:
        k -> one EvalReport per seed
    """
    results: Dict[int, List[EvalReport]] = {k: [] for k in ks}
    for seed in seeds:
        seeded = with_seed(cfg, seed)
        net, heads = build_model(seeded, seed)
        coarse = None
        for k in ks:
            run = with_k(seeded, k).train
            if _shares_coarse_stage(k) and heads.taps:
                if coarse is None:
                    coarse = train(train_set, net, heads, run, stages=[0])
                    logger.info("depth study: seed=%d coarse stage shared by k<=2", seed)
                ckpt = train(train_set, coarse.net, coarse.heads, run,
                             stages=range(1, len(heads.taps) + 1), history=coarse.history)
            else:
                ckpt = train(train_set, net, heads, run)
            results[k].append(evaluate_model(ckpt.net, ckpt.heads, test_set, k, alphas))
            logger.info("depth study: k=%d seed=%d done", k, seed)
    return results


def summarize(results: Dict[int, List[EvalReport]], alpha: float) -> List[DepthRow]:
    """Mean PCK@alpha (and its spread) and mean recall at 80% precision per k"""
    rows = []
    for k, reports in sorted(results.items()):
        pcks = np.array([r.pck[alpha]['all'] for r in reports])
        rows.append(DepthRow(
            k=k,
            pck=float(np.mean(pcks)),
            pck_std=float(np.std(pcks)),
            recall_at_p80=float(np.mean([r.recall_at_p80 for r in reports])),
            n_seeds=len(reports),
        ))
    return rows
