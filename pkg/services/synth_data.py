"""
Synthetic occluded stick figures

Each figure has a head tick pointing in its facing direction and its
left limbs on that side. With ambiguity the left and right limbs look
identical, so only the global facing cue tells them apart.
"""
import logging
from typing import Dict, List, Tuple

import numpy as np
from PIL import Image, ImageDraw

from models.dataset import Dataset, DatasetSpec, Sample
from utils.constants import (
    JOINTS, LIMBS, BODY_GRAY, LEFT_GRAY, RIGHT_GRAY, SUPERSAMPLE, LINE_WIDTH,
)
from utils.errors import RGNetError

logger = logging.getLogger(__name__)


def _random_pose(rng: np.random.Generator, size: int, facing: int) -> Dict[str, np.ndarray]:
    """Joint positions in pixel units; the left side is the facing side"""
    center = rng.uniform(0.42, 0.58, size=2) * size
    torso = rng.uniform(0.22, 0.28) * size
    tilt = rng.uniform(-0.2, 0.2)
    down = np.array([np.sin(tilt), np.cos(tilt)])
    across = np.array([np.cos(tilt), -np.sin(tilt)])

    def limb(start, angle, length, side):
        direction = np.cos(angle) * down + side * np.sin(angle) * across
        return start + length * direction

    pose = {
        'neck': center - 0.5 * torso * down,
        'pelvis': center + 0.5 * torso * down,
    }
    pose['head'] = pose['neck'] - 0.12 * size * down
    for prefix, side in (('l', facing), ('r', -facing)):
        upper = rng.uniform(np.radians(25), np.radians(110))
        fore = upper + rng.uniform(np.radians(-50), np.radians(50))
        pose[f'{prefix}_elbow'] = limb(pose['neck'], upper, 0.14 * size, side)
        pose[f'{prefix}_hand'] = limb(pose[f'{prefix}_elbow'], fore, 0.13 * size, side)
        thigh = rng.uniform(np.radians(8), np.radians(40))
        shin = thigh + rng.uniform(np.radians(-25), np.radians(25))
        pose[f'{prefix}_knee'] = limb(pose['pelvis'], thigh, 0.16 * size, side)
        pose[f'{prefix}_foot'] = limb(pose[f'{prefix}_knee'], shin, 0.15 * size, side)
    pose['nose'] = pose['head'] + facing * 0.07 * size * across

    for name in pose:
        pose[name] = np.clip(pose[name], 1.0, size - 2.0)
    return pose


def _render(pose: Dict[str, np.ndarray], size: int, ambiguous: bool) -> np.ndarray:
    """Anti-aliased 2-pixel strokes, rendered supersampled and box-filtered down"""
    big = size * SUPERSAMPLE
    canvas = Image.new('L', (big, big), 0)
    draw = ImageDraw.Draw(canvas)

    def to_canvas(p):
        return tuple(float(v) for v in (p + 0.5) * SUPERSAMPLE)

    segments = list(LIMBS) + [("head", "nose")]
    for a, b in segments:
        if a.startswith('l_') or b.startswith('l_'):
            gray = LEFT_GRAY
        elif a.startswith('r_') or b.startswith('r_'):
            gray = LEFT_GRAY if ambiguous else RIGHT_GRAY
        else:
            gray = BODY_GRAY
        draw.line([to_canvas(pose[a]), to_canvas(pose[b])], fill=gray, width=LINE_WIDTH * SUPERSAMPLE)

    small = canvas.resize((size, size), Image.BOX)
    return np.asarray(small, dtype=np.float64) / 255.0


def _occluders(rng: np.random.Generator, keypoints: np.ndarray, size: int,
               rate: float) -> List[Tuple[int, int, int, int, float]]:
    """One filled rectangle over each keypoint selected with probability rate"""
    boxes = []
    for x, y in keypoints:
        if rng.random() >= rate:
            continue
        low = max(2, int(0.12 * size))
        w, h = (int(v) for v in rng.integers(low, max(low, int(0.22 * size)) + 1, size=2))
        x0 = int(np.floor(x)) - int(rng.integers(0, w))
        y0 = int(np.floor(y)) - int(rng.integers(0, h))
        gray = float(rng.uniform(0.2, 0.9))
        boxes.append((x0, y0, x0 + w, y0 + h, gray))
    return boxes


def generate_sample(spec: DatasetSpec, index: int) -> Sample:
    """
    Render sample `index` of the dataset; a pure function of (spec, index)

    Raises:
        RGNetError: index outside 0..n_samples-1
    """
    if not 0 <= index < spec.n_samples:
        raise RGNetError(f"sample index {index} out of range for {spec.n_samples} samples")
    rng = np.random.default_rng([spec.seed, index])
    size = spec.image_size
    facing = 1 if rng.random() < 0.5 else -1
    ambiguous = bool(rng.random() < spec.ambiguity)

    pose = _random_pose(rng, size, facing)
    image = _render(pose, size, ambiguous)
    keypoints = np.array([pose[name] for name in JOINTS[:spec.n_keypoints]], dtype=np.float32)

    visibility = np.ones(spec.n_keypoints, dtype=bool)
    for x0, y0, x1, y1, gray in _occluders(rng, keypoints, size, spec.occlusion_rate):
        image[max(y0, 0):max(y1, 0), max(x0, 0):max(x1, 0)] = gray
        inside = ((keypoints[:, 0] >= x0) & (keypoints[:, 0] < x1)
                  & (keypoints[:, 1] >= y0) & (keypoints[:, 1] < y1))
        visibility &= ~inside

    if spec.noise_std > 0:
        image = np.clip(image + rng.normal(0.0, spec.noise_std, size=image.shape), 0.0, 1.0)

    return Sample(
        image=image.astype(np.float32).astype(np.float64)[None],
        keypoints=keypoints.astype(np.float64),
        visibility=visibility,
    )


def generate_dataset(spec: DatasetSpec) -> Dataset:
    logger.info("generating %d samples (seed %d, size %d)", spec.n_samples, spec.seed, spec.image_size)
    return Dataset(spec=spec, samples=[generate_sample(spec, i) for i in range(spec.n_samples)])


def make_target(sample: Sample, heatmap_size: Tuple[int, int], radius: float) -> np.ndarray:
    """
    Binary M x H x W heatmaps

    Channel m is 1 within Euclidean distance radius of keypoint m's
    (rounded) position at heatmap resolution, all 0 if m is not visible.
    """
    if radius < 0:
        raise RGNetError(f"radius must be nonnegative, got {radius}")
    height, width = heatmap_size
    size = sample.image_size
    target = np.zeros((sample.n_keypoints, height, width))
    rows, cols = np.mgrid[0:height, 0:width]
    for m, ((x, y), visible) in enumerate(zip(sample.keypoints, sample.visibility)):
        if not visible:
            continue
        cx = min(max(int(np.floor(x * width / size + 0.5)), 0), width - 1)
        cy = min(max(int(np.floor(y * height / size + 0.5)), 0), height - 1)
        target[m] = (cols - cx) ** 2 + (rows - cy) ** 2 <= radius ** 2
    return target


def segment_distance(point: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance from point to segment ab"""
    ab = b - a
    denom = float(ab @ ab)
    t = 0.0 if denom == 0 else min(max(float((point - a) @ ab) / denom, 0.0), 1.0)
    return float(np.linalg.norm(point - (a + t * ab)))
