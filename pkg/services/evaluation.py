"""Keypoint localization and visibility evaluation"""
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from config import DEFAULT_PCK_ALPHAS, DEFAULT_VISIBILITY_THRESHOLD, PCK_CURVE_ALPHAS, TARGET_PRECISION
from models.dataset import Sample
from models.heads import HeadBank
from models.network import RGNetwork
from models.reports import EvalReport, PRPoint
from utils.errors import RGNetError, ShapeError
from .inference import qp_k
from .training import decode_keypoints, predict_heads

logger = logging.getLogger(__name__)


def _errors(preds: np.ndarray, gts: np.ndarray) -> np.ndarray:
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if preds.shape != gts.shape or preds.shape[-1] != 2:
        raise ShapeError(f"predictions {preds.shape} and ground truth {gts.shape} must both be (..., 2)")
    return np.linalg.norm(preds - gts, axis=-1)


def eval_pck(preds: np.ndarray, gts: np.ndarray, alpha: float, ref_size: float,
             visible: Optional[np.ndarray] = None) -> float:
    """
    Fraction of visible keypoints within alpha * ref_size of the ground truth

    Args:
        preds, gts: (..., 2) keypoint coordinates
        alpha: threshold as a fraction of ref_size
        ref_size: reference length (the image side for synthetic data)
        visible: mask of scored keypoints (default: all)

    Returns:
        correct / scored, or nan when no keypoint is scored
    """
    errors = _errors(preds, gts)
    mask = np.ones(errors.shape, dtype=bool) if visible is None else np.asarray(visible, dtype=bool)
    if mask.shape != errors.shape:
        raise ShapeError(f"visibility mask {mask.shape} does not match keypoints {errors.shape}")
    scored = int(mask.sum())
    if scored == 0:
        return float('nan')
    return float(np.count_nonzero(errors[mask] <= alpha * ref_size)) / scored


def pck_per_keypoint(preds: np.ndarray, gts: np.ndarray, alpha: float, ref_size: float,
                     visible: np.ndarray) -> List[float]:
    """PCK of each keypoint id (last-but-one axis) over the leading sample axis"""
    return [eval_pck(preds[:, m], gts[:, m], alpha, ref_size, visible[:, m]) for m in range(preds.shape[1])]


def mean_normalized_error(preds: np.ndarray, gts: np.ndarray, ref_size: float,
                          visible: Optional[np.ndarray] = None) -> float:
    errors = _errors(preds, gts) / ref_size
    if visible is not None:
        errors = errors[np.asarray(visible, dtype=bool)]
    return float(errors.mean()) if errors.size else float('nan')


def pck_curve(preds: np.ndarray, gts: np.ndarray, ref_size: float, visible: np.ndarray,
              alphas: Sequence[float] = PCK_CURVE_ALPHAS) -> List[tuple]:
    return [(float(a), eval_pck(preds, gts, a, ref_size, visible)) for a in alphas]


def eval_visibility_pr(confidences: np.ndarray, labels: np.ndarray) -> List[PRPoint]:
    """
    Precision-recall sweep over every distinct confidence

    A keypoint is predicted visible when its confidence is >= the
    threshold. Points are sorted by ascending threshold, so recall never
    increases along the curve. With no predicted positives precision is
    reported as 1.

    Raises:
        RGNetError: no positive labels
    """
    confidences = np.asarray(confidences, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    if confidences.shape != labels.shape:
        raise ShapeError(f"{confidences.size} confidences for {labels.size} labels")
    positives = int(labels.sum())
    if positives == 0:
        raise RGNetError("recall is undefined without positive labels")

    curve = []
    for t in np.unique(confidences):
        predicted = confidences >= t
        tp = int(np.count_nonzero(predicted & labels))
        fp = int(np.count_nonzero(predicted & ~labels))
        fn = positives - tp
        precision = tp / (tp + fp) if tp + fp else 1.0
        curve.append(PRPoint(float(t), precision, tp / positives, tp, fp, fn))
    return curve


def recall_at_precision(curve: List[PRPoint], target: float = TARGET_PRECISION) -> float:
    """Largest recall whose precision reaches target, 0 if none does"""
    return max((p.recall for p in curve if p.precision >= target), default=0.0)


def precision_recall_at(confidences: np.ndarray, labels: np.ndarray, threshold: float) -> PRPoint:
    """Counts and rates when a keypoint is called visible at confidence >= threshold"""
    confidences = np.asarray(confidences, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    predicted = confidences >= threshold
    tp = int(np.count_nonzero(predicted & labels))
    fp = int(np.count_nonzero(predicted & ~labels))
    fn = int(np.count_nonzero(~predicted & labels))
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return PRPoint(float(threshold), precision, recall, tp, fp, fn)


def predict_dataset(net: RGNetwork, heads: HeadBank, samples: Sequence[Sample], k: int) -> np.ndarray:
    """(N, M, 3) decoded x, y, confidence for every sample"""
    out = []
    for sample in samples:
        logits = predict_heads(heads, qp_k(net, sample.image, k))
        out.append(decode_keypoints(logits, sample.image_size))
    return np.stack(out) if out else np.zeros((0, heads.n_keypoints, 3))


def evaluate_model(net: RGNetwork, heads: HeadBank, samples: Sequence[Sample], k: int,
                   alphas: Sequence[float] = DEFAULT_PCK_ALPHAS,
                   threshold: float = DEFAULT_VISIBILITY_THRESHOLD) -> EvalReport:
    """
    PCK, visibility precision-recall and normalized errors on a dataset

    The reference size is the image side; only visible keypoints are
    scored for PCK. threshold is the visibility operating point reported
    alongside the curve.
    """
    samples = list(samples)
    if not samples:
        raise RGNetError("cannot evaluate on an empty dataset")
    decoded = predict_dataset(net, heads, samples, k)
    preds = decoded[..., :2]
    gts = np.stack([s.keypoints for s in samples])
    visible = np.stack([s.visibility for s in samples])
    ref_size = float(samples[0].image_size)

    pck: Dict[float, Dict[str, float]] = {}
    for alpha in alphas:
        entry = {'all': eval_pck(preds, gts, alpha, ref_size, visible)}
        for m, value in enumerate(pck_per_keypoint(preds, gts, alpha, ref_size, visible)):
            entry[str(m)] = value
        pck[float(alpha)] = entry

    report = EvalReport(
        pck=pck,
        mean_error_visible=mean_normalized_error(preds, gts, ref_size, visible),
        mean_error_all=mean_normalized_error(preds, gts, ref_size),
        pck_curve=pck_curve(preds, gts, ref_size, visible),
        k=k,
        n_samples=len(samples),
    )
    if visible.any():
        report.pr_curve = eval_visibility_pr(decoded[..., 2], visible)
        report.recall_at_p80 = recall_at_precision(report.pr_curve)
        report.operating_point = precision_recall_at(decoded[..., 2], visible, threshold)
    else:
        logger.warning("no visible keypoints: visibility precision-recall skipped")
    logger.info("k=%d: PCK %s, recall@P%.0f %.3f", k,
                {a: round(v['all'], 4) for a, v in pck.items()}, 100 * TARGET_PRECISION, report.recall_at_p80)
    return report
