"""
Training engine

Unrolled QP_k inference followed by multi-scale linear heads, trained
end-to-end with exact reverse-mode gradients of a per-pixel binary
cross-entropy loss and SGD with momentum.
"""
import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models.dataset import Sample
from models.heads import HeadBank
from models.inference import InferenceTrace
from models.network import RGNetwork
from models.training import Checkpoint, EpochRecord, TrainConfig
from utils.errors import RGNetError, ShapeError
from .inference import activate, layer_drive, pass_schedule, qp_k, _check_input
from .synth_data import make_target
from .tensor_ops import (
    convolve_transposed, correlate, correlate_filter_grad, sum_pool, upsample_nearest,
)

logger = logging.getLogger(__name__)

Params = Dict[str, np.ndarray]


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


# ---------------------------------------------------------------------------
# Heads
# ---------------------------------------------------------------------------

def _n_taps(heads: HeadBank, n_taps: Optional[int]) -> int:
    if n_taps is None:
        return len(heads.taps)
    if not 0 <= n_taps <= len(heads.taps):
        raise RGNetError(f"n_taps must be in 0..{len(heads.taps)}, got {n_taps}")
    return n_taps


def _head_forward(heads: HeadBank, states: List[np.ndarray],
                  n_taps: int) -> Tuple[np.ndarray, List[Tuple[int, int]]]:
    top = states[-1]
    if heads.coarse.weight.shape[1] != top.size:
        raise ShapeError(f"coarse head reads {heads.coarse.weight.shape[1]} units, top layer has {top.size}")
    logits = (heads.coarse.weight @ top.ravel()).reshape(heads.coarse.grid) + heads.coarse.bias

    factors = []
    for tap in heads.taps[:n_taps]:
        if not 1 <= tap.layer <= len(states):
            raise ShapeError(f"tap references layer {tap.layer}, network has {len(states)}")
        z = states[tap.layer - 1]
        if tap.weight.shape[1] != z.shape[0]:
            raise ShapeError(f"tap on layer {tap.layer} reads {tap.weight.shape[1]} channels, layer has {z.shape[0]}")
        f_h, f_w = z.shape[1] // logits.shape[1], z.shape[2] // logits.shape[2]
        if f_h * logits.shape[1] != z.shape[1] or f_w * logits.shape[2] != z.shape[2]:
            raise ShapeError(f"layer {tap.layer} resolution {z.shape[1:]} is not a multiple of {logits.shape[1:]}")
        fine = np.tensordot(tap.weight, z, axes=([1], [0])) + tap.bias[:, None, None]
        logits = upsample_nearest(logits, (f_h, f_w)) + fine
        factors.append((f_h, f_w))
    return logits, factors


def predict_heads(heads: HeadBank, trace: InferenceTrace, n_taps: Optional[int] = None) -> np.ndarray:
    """
    M x H x W keypoint logits

    The coarse head maps the top layer to its grid; each tap in turn
    upsamples the running prediction (nearest neighbour) to its layer's
    resolution and adds its 1x1 filter output.

    Args:
        heads: head parameters
        trace: latent states from inference
        n_taps: use only the first n_taps taps (default: all)
    """
    logits, _ = _head_forward(heads, trace.states, _n_taps(heads, n_taps))
    return logits


def predict(net: RGNetwork, heads: HeadBank, image: np.ndarray, k: int,
            n_taps: Optional[int] = None) -> np.ndarray:
    return predict_heads(heads, qp_k(net, image, k), n_taps)


def decode_keypoints(logits: np.ndarray, image_size: int) -> np.ndarray:
    """
    Arg-max location and confidence per channel

    Returns:
        (M, 3) array of x, y in image pixels and sigmoid(max logit)
    """
    m, height, width = logits.shape
    flat = logits.reshape(m, -1)
    best = np.argmax(flat, axis=1)
    out = np.empty((m, 3))
    out[:, 0] = (best % width) * image_size / width
    out[:, 1] = (best // width) * image_size / height
    out[:, 2] = sigmoid(flat[np.arange(m), best])
    return out


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------

def _loss_target(logits: np.ndarray, target: np.ndarray, visible: Optional[np.ndarray]) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != logits.shape:
        raise ShapeError(f"target shape {target.shape} does not match logits {logits.shape}")
    if not np.all((target == 0) | (target == 1)):
        raise RGNetError("heatmap targets must be binary")
    if visible is not None:
        target = target * np.asarray(visible, dtype=bool)[:, None, None]
    return target


def heatmap_loss(logits: np.ndarray, target: np.ndarray, visible: Optional[np.ndarray] = None) -> float:
    """
    Mean per-pixel binary cross-entropy

    max(l, 0) - t * l + log(1 + exp(-|l|)), which never overflows.
    Channels of invisible keypoints are all-negative.
    """
    logits = np.asarray(logits, dtype=np.float64)
    t = _loss_target(logits, target, visible)
    return float(np.mean(np.logaddexp(0.0, logits) - t * logits))


def heatmap_loss_grad(logits: np.ndarray, target: np.ndarray, visible: Optional[np.ndarray] = None) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    t = _loss_target(logits, target, visible)
    return (sigmoid(logits) - t) / logits.size


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def model_parameters(net: RGNetwork, heads: HeadBank) -> Params:
    """Live views of every trainable array, keyed by name"""
    params = {}
    for i, (f, b) in enumerate(zip(net.filters, net.biases), start=1):
        params[f'layer{i}.weight'] = f.weights
        params[f'layer{i}.bias'] = b
    params['coarse.weight'] = heads.coarse.weight
    params['coarse.bias'] = heads.coarse.bias
    for j, tap in enumerate(heads.taps):
        params[f'tap{j}.weight'] = tap.weight
        params[f'tap{j}.bias'] = tap.bias
    return params


def learning_rate_scales(heads: HeadBank, decay: float) -> Dict[str, float]:
    """Tap j (0-based, coarse to fine) learns decay**(j+1) times slower"""
    scales = {}
    for j in range(len(heads.taps)):
        scales[f'tap{j}.weight'] = scales[f'tap{j}.bias'] = 1.0 / decay ** (j + 1)
    return scales


def _decays(name: str) -> bool:
    return name.endswith('.weight')


def _weight_penalty(params: Params) -> float:
    return 0.5 * sum(float(np.sum(p * p)) for name, p in params.items() if _decays(name))


# ---------------------------------------------------------------------------
# Unrolled inference
# ---------------------------------------------------------------------------

@dataclass
class _Step:
    """Inputs read by one layer update"""
    layer: int
    below: np.ndarray
    above: Optional[np.ndarray]
    mask: np.ndarray
    drive: np.ndarray


def _lowest_read(net: RGNetwork, heads: HeadBank, n_taps: int) -> int:
    return min([net.n_layers] + [tap.layer for tap in heads.taps[:n_taps]])


def _forward_tape(net: RGNetwork, x: np.ndarray, k: int,
                  lowest: Optional[int] = None) -> Tuple[List[np.ndarray], List[_Step]]:
    """
    The qp_k computation, keeping what the reverse pass needs

    Top-down terms are left out while the layer above is still all zeros.
    When k is even the final (descending) pass stops at layer `lowest`:
    nothing at or above it reads the updates below it.
    """
    states = [np.zeros(s) for s in net.layer_shapes()]
    schedule = pass_schedule(net.n_layers, k)
    if lowest is not None and k % 2 == 0:
        schedule[-1] = [i for i in schedule[-1] if i >= lowest]
    written = set()
    tape = []
    for layers in schedule:
        for i in layers:
            below = x if i == 1 else states[i - 2]
            above = states[i] if i + 1 in written else None
            drive = layer_drive(net, states, i, x, top_down=above is not None)
            z, mask = activate(drive, net.layers[i - 1].nms_group)
            tape.append(_Step(i, below, above, mask, drive))
            states[i - 1] = z
            written.add(i)
    return states, tape


def _sample_loss(net: RGNetwork, heads: HeadBank, sample: Sample, k: int, n_taps: int,
                 radius: float) -> Tuple[float, List[np.ndarray], List[_Step], np.ndarray, np.ndarray, list]:
    x = _check_input(net, sample.image)
    states, tape = _forward_tape(net, x, k, _lowest_read(net, heads, n_taps))
    logits, factors = _head_forward(heads, states, n_taps)
    target = make_target(sample, logits.shape[1:], radius)
    loss = heatmap_loss(logits, target, sample.visibility)
    return loss, states, tape, logits, target, factors


def _accumulate(net: RGNetwork, heads: HeadBank, batch: Sequence[Sample], k: int, n_used: int,
                radius: float, parts: Optional[Tuple[Params, Params]] = None) -> Tuple[float, Params]:
    """Summed loss and gradient; parts, if given, collects the bottom-up and top-down filter terms"""
    grads = {name: np.zeros_like(p) for name, p in model_parameters(net, heads).items()}
    total = 0.0

    for sample in batch:
        loss, states, tape, logits, target, factors = _sample_loss(net, heads, sample, k, n_used, radius)
        total += loss
        gz = [np.zeros_like(s) for s in states]

        g = heatmap_loss_grad(logits, target, sample.visibility)
        for j in reversed(range(n_used)):
            tap = heads.taps[j]
            z = states[tap.layer - 1]
            grads[f'tap{j}.weight'] += np.tensordot(g, z, axes=([1, 2], [1, 2]))
            grads[f'tap{j}.bias'] += g.sum(axis=(1, 2))
            gz[tap.layer - 1] += np.tensordot(tap.weight, g, axes=([0], [0]))
            g = sum_pool(g, factors[j])
        top = states[-1]
        grads['coarse.weight'] += np.outer(g.ravel(), top.ravel())
        grads['coarse.bias'] += g
        gz[-1] += (heads.coarse.weight.T @ g.ravel()).reshape(top.shape)

        for step in reversed(tape):
            i = step.layer
            g_drive = gz[i - 1] * step.mask
            # this update overwrote the previous z_i
            gz[i - 1] = np.zeros_like(gz[i - 1])
            if not g_drive.any():
                continue
            f = net.filters[i - 1]
            grads[f'layer{i}.bias'] += g_drive.sum(axis=(1, 2))
            bottom_up = correlate_filter_grad(f, step.below, g_drive)
            grads[f'layer{i}.weight'] += bottom_up
            if parts is not None:
                parts[0][f'layer{i}.weight'] += bottom_up
            if i > 1:
                gz[i - 2] += convolve_transposed(f, g_drive, step.below.shape)
            if step.above is not None:
                f_up = net.filters[i]
                gz[i] += correlate(f_up, g_drive)
                top_down = correlate_filter_grad(f_up, g_drive, step.above)
                grads[f'layer{i + 1}.weight'] += top_down
                if parts is not None:
                    parts[1][f'layer{i + 1}.weight'] += top_down
    return total, grads


def backward(net: RGNetwork, heads: HeadBank, batch: Sequence[Sample], k: int,
             weight_decay: float = 0.0, n_taps: Optional[int] = None,
             radius: float = 1.0) -> Tuple[float, Params]:
    """
    Batch-mean loss and its exact gradient for every parameter

    The gradient flows through all k passes of unrolled inference, so a
    filter shared between its bottom-up and top-down uses receives both
    contributions. Inactive units (and NMS losers) pass no gradient.

    Args:
        net, heads: current parameters (not modified)
        batch: samples, averaged over
        k: number of inference passes
        weight_decay: adds 0.5 * weight_decay * ||weights||^2 to the loss
        n_taps: number of head taps in use (default: all)
        radius: positive radius of the heatmap targets

    Returns:
        (loss, gradients keyed like model_parameters)
    """
    if not batch:
        raise RGNetError("cannot compute gradients of an empty batch")
    params = model_parameters(net, heads)
    total, grads = _accumulate(net, heads, batch, k, _n_taps(heads, n_taps), radius)

    n = len(batch)
    for name in grads:
        grads[name] /= n
        if weight_decay and _decays(name):
            grads[name] += weight_decay * params[name]
    loss = total / n
    if weight_decay:
        loss += weight_decay * _weight_penalty(params)
    return loss, grads


def filter_gradient_split(net: RGNetwork, heads: HeadBank, batch: Sequence[Sample], k: int,
                          n_taps: Optional[int] = None,
                          radius: float = 1.0) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """
    Batch-mean gradient of each layer filter, split by use

    Returns:
        {'layer{i}.weight': (bottom-up part, top-down part)}; the two parts
        sum to backward()'s gradient without weight decay. The top-down
        part is zero when k == 1.
    """
    if not batch:
        raise RGNetError("cannot compute gradients of an empty batch")
    names = [f'layer{i}.weight' for i in range(1, net.n_layers + 1)]
    bottom_up = {name: np.zeros_like(f.weights) for name, f in zip(names, net.filters)}
    top_down = {name: np.zeros_like(f.weights) for name, f in zip(names, net.filters)}
    _accumulate(net, heads, batch, k, _n_taps(heads, n_taps), radius, parts=(bottom_up, top_down))
    n = len(batch)
    return {name: (bottom_up[name] / n, top_down[name] / n) for name in names}


def _loss_and_pattern(net, heads, batch, k, weight_decay, n_taps, radius):
    """Loss plus the sign and NMS-winner pattern of every update"""
    total, pattern = 0.0, []
    for sample in batch:
        loss, _, tape, _, _, _ = _sample_loss(net, heads, sample, k, n_taps, radius)
        total += loss
        pattern.extend(step.mask for step in tape)
        pattern.extend(step.drive > 0 for step in tape)
    loss = total / len(batch)
    if weight_decay:
        loss += weight_decay * _weight_penalty(model_parameters(net, heads))
    return loss, pattern


def _same_pattern(a: List[np.ndarray], b: List[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(p, q) for p, q in zip(a, b))


def finite_diff_check(net: RGNetwork, heads: HeadBank, batch: Sequence[Sample], k: int,
                      eps: float = 1e-5, weight_decay: float = 0.0, n_taps: Optional[int] = None,
                      radius: float = 1.0, max_per_param: Optional[int] = None,
                      rng: Optional[np.random.Generator] = None,
                      names: Optional[Sequence[str]] = None) -> float:
    """
    Largest relative error between backward() and central differences

    Coordinates whose +-eps perturbation changes any rectification or NMS
    decision are skipped: the loss is not differentiable across them.
    Parameters are restored exactly.

    Args:
        max_per_param: check at most this many random entries of each array
        rng: generator for choosing entries (default seed 0)
        names: check only these parameters (default: all)

    Returns:
        max |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)

    Raises:
        RGNetError: unknown parameter name, or every chosen coordinate was skipped
    """
    n_used = _n_taps(heads, n_taps)
    _, grads = backward(net, heads, batch, k, weight_decay, n_used, radius)
    _, base_pattern = _loss_and_pattern(net, heads, batch, k, weight_decay, n_used, radius)
    rng = rng if rng is not None else np.random.default_rng(0)
    params = model_parameters(net, heads)
    if names is not None:
        unknown = sorted(set(names) - set(params))
        if unknown:
            raise RGNetError(f"unknown parameters: {', '.join(unknown)}")
        params = {name: params[name] for name in names}

    worst, checked, skipped = 0.0, 0, 0
    for name, theta in params.items():
        indices = list(np.ndindex(theta.shape))
        if max_per_param is not None and len(indices) > max_per_param:
            chosen = rng.choice(len(indices), size=max_per_param, replace=False)
            indices = [indices[c] for c in sorted(chosen)]
        for idx in indices:
            original = theta[idx]
            theta[idx] = original + eps
            plus, plus_pattern = _loss_and_pattern(net, heads, batch, k, weight_decay, n_used, radius)
            theta[idx] = original - eps
            minus, minus_pattern = _loss_and_pattern(net, heads, batch, k, weight_decay, n_used, radius)
            theta[idx] = original
            if not (_same_pattern(plus_pattern, base_pattern) and _same_pattern(minus_pattern, base_pattern)):
                skipped += 1
                continue
            numeric = (plus - minus) / (2 * eps)
            analytic = float(grads[name][idx])
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, err)
            checked += 1

    logger.info("gradient check: %d coordinates, %d skipped at activation boundaries, max rel err %.3e",
                checked, skipped, worst)
    if checked == 0:
        raise RGNetError(f"gradient check compared nothing: all {skipped} coordinates sit at activation boundaries")
    return worst


# ---------------------------------------------------------------------------
# Optimisation
# ---------------------------------------------------------------------------

def sgd_step(params: Params, grads: Params, velocity: Params, cfg: TrainConfig,
             lr_scales: Optional[Dict[str, float]] = None) -> None:
    """
    In-place momentum SGD

    v <- momentum * v - lr * scale * (g + weight_decay * theta); theta <- theta + v.
    Weight decay applies to weights, not biases.
    """
    lr_scales = lr_scales or {}
    for name, theta in params.items():
        g = grads[name]
        if _decays(name) and cfg.weight_decay:
            g = g + cfg.weight_decay * theta
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(theta)
        v = cfg.momentum * v - cfg.learning_rate * lr_scales.get(name, 1.0) * g
        velocity[name] = v
        theta += v


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> Iterable[np.ndarray]:
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(samples: Sequence[Sample], net: RGNetwork, heads: HeadBank, cfg: TrainConfig,
          coarse_to_fine: bool = True,
          on_epoch: Optional[Callable[[EpochRecord], None]] = None,
          stages: Optional[Sequence[int]] = None,
          history: Sequence[EpochRecord] = ()) -> Checkpoint:
    """
    Fit network and heads by minibatch SGD through unrolled QP_k

    With coarse_to_fine, stage s trains with the first s taps for
    cfg.epochs epochs (s = 0..len(taps)), each stage starting from the
    previous stage's parameters with fresh momentum. Shuffling is seeded
    by cfg.seed and the stage index. The given net and heads are copied,
    not modified.

    Args:
        stages: run only these stages, in order; training stages [0] and
            then continuing with [1, ..., len(taps)] gives the same
            parameters as one coarse-to-fine run
        history: epochs already run on the given parameters, carried into
            the returned checkpoint
    """
    samples = list(samples)
    if not samples:
        raise RGNetError("cannot train on an empty dataset")
    net, heads = net.copy(), heads.copy()
    params = model_parameters(net, heads)
    scales = learning_rate_scales(heads, cfg.lr_decay_per_finer_scale)
    if stages is None:
        stages = range(len(heads.taps) + 1) if coarse_to_fine else [len(heads.taps)]
    stages = list(stages)
    for stage in stages:
        _n_taps(heads, stage)

    history = list(history)
    velocity: Params = {}
    for stage in stages:
        velocity = {}
        rng = np.random.default_rng([cfg.seed, stage])
        for epoch in range(1, cfg.epochs + 1):
            started = time.perf_counter()
            losses, sizes = [], []
            for idx in _batches(len(samples), cfg.batch_size, rng):
                batch = [samples[i] for i in idx]
                loss, grads = backward(net, heads, batch, cfg.k, n_taps=stage, radius=cfg.positive_radius)
                sgd_step(params, grads, velocity, cfg, scales)
                losses.append(loss)
                sizes.append(len(batch))
            record = EpochRecord(stage=stage, epoch=epoch,
                                 loss=float(np.average(losses, weights=sizes)),
                                 seconds=time.perf_counter() - started)
            history.append(record)
            logger.info("stage %d epoch %d: loss %.6f (%.1fs)", stage, epoch, record.loss, record.seconds)
            if on_epoch is not None:
                on_epoch(record)

    return Checkpoint(net=net, heads=heads, k=cfg.k, epoch=len(history),
                      velocity=velocity, history=history)
