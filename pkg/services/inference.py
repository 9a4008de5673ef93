"""
Layer-wise coordinate descent on the hierarchical Rectified Gaussian

A layer update is filtering (bottom-up correlation plus top-down
transposed convolution), rectification and, for NMS layers, suppression
of everything but the strongest unit of each group.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np

from models.inference import InferenceTrace
from models.network import RGNetwork
from utils.constants import DEFAULT_TOL
from utils.errors import RGNetError, ShapeError
from .tensor_ops import convolve_transposed, correlate, rectify

logger = logging.getLogger(__name__)


def coord_update_scalar(drive: float) -> float:
    """Optimal z_i >= 0 for w_ii = -1: max(0, b_i + sum_{j != i} w_ij z_j)"""
    return max(0.0, float(drive))


def _group_blocks(x: np.ndarray, group: Tuple[int, int]) -> np.ndarray:
    c, h, w = x.shape
    g_h, g_w = group
    if h % g_h or w % g_w:
        raise ShapeError(f"NMS groups {group} do not tile a {h}x{w} layer")
    return x.reshape(c, h // g_h, g_h, w // g_w, g_w).transpose(0, 1, 3, 2, 4).reshape(
        c, h // g_h, w // g_w, g_h * g_w)


def _ungroup(blocks: np.ndarray, group: Tuple[int, int]) -> np.ndarray:
    c, gh_n, gw_n, _ = blocks.shape
    g_h, g_w = group
    return blocks.reshape(c, gh_n, gw_n, g_h, g_w).transpose(0, 1, 3, 2, 4).reshape(c, gh_n * g_h, gw_n * g_w)


def nms_winners(drives: np.ndarray, group: Tuple[int, int]) -> np.ndarray:
    """Boolean tensor marking the maximal drive of each group (lowest index on ties)"""
    blocks = _group_blocks(drives, group)
    winner = np.argmax(blocks, axis=-1)
    onehot = np.arange(blocks.shape[-1]) == winner[..., None]
    return _ungroup(onehot, group)


def nms_group_update(drives: np.ndarray, group: Tuple[int, int]) -> np.ndarray:
    """Rectified drive at each group's winner, exactly 0 everywhere else"""
    return np.where(nms_winners(drives, group), rectify(drives), 0.0)


def activate(drive: np.ndarray, nms_group: Optional[Tuple[int, int]]) -> Tuple[np.ndarray, np.ndarray]:
    """
    New layer state and the mask of units that pass gradient

    Returns:
        (z, mask) where mask is True exactly where z depends on drive
    """
    if nms_group is None:
        return rectify(drive), drive > 0
    winners = nms_winners(drive, nms_group)
    return np.where(winners, rectify(drive), 0.0), winners & (drive > 0)


def layer_drive(net: RGNetwork, states: List[np.ndarray], i: int, x: np.ndarray,
                top_down: bool = True) -> np.ndarray:
    """
    b_i + top_i + bot_i for layer i (1-based), reading the current states

    top_down=False drops top_i, which is exactly zero while layer i+1 still
    holds its initial state.
    """
    below = x if i == 1 else states[i - 2]
    drive = correlate(net.filters[i - 1], below) + net.biases[i - 1][:, None, None]
    if top_down and i < net.n_layers:
        drive = drive + convolve_transposed(net.filters[i], states[i], states[i - 1].shape)
    return drive


def layer_update(net: RGNetwork, trace: InferenceTrace, i: int, x: np.ndarray) -> InferenceTrace:
    """
    Replace z_i with its coordinate-wise optimum given the neighbouring layers

    Raises:
        RGNetError: i outside 1..L
    """
    if not 1 <= i <= net.n_layers:
        raise RGNetError(f"layer index {i} out of range 1..{net.n_layers}")
    drive = layer_drive(net, trace.states, i, x)
    trace.states[i - 1], _ = activate(drive, net.layers[i - 1].nms_group)
    return trace


def pass_schedule(n_layers: int, k: int) -> List[List[int]]:
    """
    Layer order of each of the k passes

    Pass 1 ascends 1..L, even passes descend L-1..1, later odd passes
    ascend 2..L. The top layer is not revisited on the way down.
    """
    if k < 1:
        raise RGNetError(f"k must be at least 1, got {k}")
    return [pass_layers(n_layers, p) for p in range(1, k + 1)]


def pass_layers(n_layers: int, p: int) -> List[int]:
    """Layer order of pass p (1-based)"""
    if p == 1:
        return list(range(1, n_layers + 1))
    if p % 2 == 0:
        return list(range(n_layers - 1, 0, -1))
    return list(range(2, n_layers + 1))


def _check_input(net: RGNetwork, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != net.input_dims:
        raise ShapeError(f"input has shape {x.shape}, network expects {net.input_dims}")
    return x


def _run_pass(net: RGNetwork, trace: InferenceTrace, layers: List[int], x: np.ndarray) -> float:
    gap = 0.0
    for i in layers:
        before = trace.states[i - 1]
        layer_update(net, trace, i, x)
        gap = max(gap, float(np.max(np.abs(trace.states[i - 1] - before))))
    return gap


def empty_trace(net: RGNetwork) -> InferenceTrace:
    return InferenceTrace(states=[np.zeros(s) for s in net.layer_shapes()])


def qp_k(net: RGNetwork, x: np.ndarray, k: int, record: bool = False) -> InferenceTrace:
    """
    k passes of layer-wise coordinate descent from z = 0

    Args:
        net: network weights
        x: observed image, shape net.input_dims
        k: number of passes (1 = feedforward CNN, 2 = one extra top-down pass)
        record: keep a copy of every layer after each pass in trace.pass_log
    """
    x = _check_input(net, x)
    trace = empty_trace(net)
    if record:
        trace.pass_log = []
    for layers in pass_schedule(net.n_layers, k):
        trace.converged_gap = _run_pass(net, trace, layers, x)
        trace.passes += 1
        if record:
            trace.pass_log.append([s.copy() for s in trace.states])
    return trace


def qp_until_converged(net: RGNetwork, x: np.ndarray, tol: float = DEFAULT_TOL,
                       max_passes: int = 100000) -> InferenceTrace:
    """Continue the qp_k schedule until two consecutive passes move no unit by tol or more"""
    x = _check_input(net, x)
    trace = empty_trace(net)
    quiet = 0
    p = 0
    while p < max_passes:
        p += 1
        trace.converged_gap = _run_pass(net, trace, pass_layers(net.n_layers, p), x)
        trace.passes = p
        quiet = quiet + 1 if trace.converged_gap < tol else 0
        if quiet >= 2:
            logger.debug("layer-wise descent converged after %d passes", p)
            return trace
    logger.warning("layer-wise descent stopped after %d passes, gap %.3e", p, trace.converged_gap)
    return trace
