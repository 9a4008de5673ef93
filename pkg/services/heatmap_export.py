"""Heatmap images and keypoint reports for a single prediction"""
import logging
from pathlib import Path
from typing import List

import numpy as np

from config import DEFAULT_VISIBILITY_THRESHOLD
from .dataset_io import write_pgm
from .training import decode_keypoints, sigmoid

logger = logging.getLogger(__name__)

REPORT_NAME = "keypoints.txt"


def write_heatmaps(logits: np.ndarray, out_dir, prefix: str = "heatmap") -> List[Path]:
    """One P5 greymap per keypoint, pixel = round(255 * sigmoid(logit))"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return [write_pgm(sigmoid(channel), out_dir / f"{prefix}_{m:02d}.pgm") for m, channel in enumerate(logits)]


def format_report(decoded: np.ndarray, threshold: float = DEFAULT_VISIBILITY_THRESHOLD) -> str:
    """Lines of `id x y confidence visible`"""
    lines = []
    for m, (x, y, conf) in enumerate(decoded):
        lines.append(f"{m} {x:.4f} {y:.4f} {conf:.6f} {int(conf >= threshold)}")
    return "\n".join(lines) + "\n"


def export_prediction(logits: np.ndarray, image_size: int, out_dir,
                      threshold: float = DEFAULT_VISIBILITY_THRESHOLD) -> Path:
    """Write heatmaps and the keypoint report; returns the report path"""
    out_dir = Path(out_dir)
    write_heatmaps(logits, out_dir)
    report = out_dir / REPORT_NAME
    report.write_text(format_report(decode_keypoints(logits, image_size), threshold))
    logger.info("wrote %d heatmaps and %s", len(logits), report)
    return report
