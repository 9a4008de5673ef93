"""Quadratic energy, copositivity checks and the dense testing bridge"""
import logging
from itertools import combinations
from math import comb
from typing import Optional, Tuple

import numpy as np

from models.filters import FilterBank
from models.inference import CopositivityVerdict
from models.network import DenseQP, RGNetwork
from utils.constants import COPOSITIVE_MAX_N, COPOSITIVE_SLACK, DENSE_MAX_VARIABLES
from utils.errors import RGNetError, ScaleError, ShapeError
from .tensor_ops import correlate

logger = logging.getLogger(__name__)

# Upper bound on simplex grid points evaluated by check_copositive_grid
MAX_GRID_POINTS = 5_000_000
_GRID_CHUNK = 100_000


def score(qp: DenseQP, z) -> Optional[float]:
    """
    S(z) = 1/2 z'Wz + b'z

    Returns None (infeasible) when a group holds two or more strictly
    positive entries.

    Raises:
        RGNetError: z has negative entries
        ShapeError: z has the wrong length
    """
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.shape[0] != qp.n:
        raise ShapeError(f"z has {z.shape[0]} entries, QP has {qp.n} variables")
    if np.any(z < 0):
        raise RGNetError("score is defined only for nonnegative z")
    for g in qp.groups:
        if np.count_nonzero(z[g] > 0) > 1:
            return None
    return float(0.5 * z @ qp.W @ z + qp.b @ z)


def _simplex_grid(n: int, resolution: int):
    """Yield chunks of all points of the standard simplex with coordinates in multiples of 1/resolution"""
    slots = resolution + n - 1
    bars = combinations(range(slots), n - 1)
    while True:
        chunk = []
        for bar in bars:
            chunk.append(bar)
            if len(chunk) == _GRID_CHUNK:
                break
        if not chunk:
            return
        arr = np.array(chunk, dtype=np.int64).reshape(len(chunk), n - 1)
        ends = np.concatenate([np.full((len(chunk), 1), -1), arr, np.full((len(chunk), 1), slots)], axis=1)
        yield (np.diff(ends, axis=1) - 1) / resolution
        if len(chunk) < _GRID_CHUNK:
            return


def check_copositive_grid(M, resolution: int) -> CopositivityVerdict:
    """
    Search the standard simplex grid for z >= 0 with z'Mz < 0

    Only certifies "copositive on the grid"; any counterexample returned
    has been re-evaluated directly.

    Raises:
        ScaleError: more than COPOSITIVE_MAX_N variables, or too many grid points
        ShapeError: M not square and symmetric
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"M must be square, got shape {M.shape}")
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-12):
        raise ShapeError("M must be symmetric")
    n = M.shape[0]
    if n > COPOSITIVE_MAX_N:
        raise ScaleError(f"grid copositivity check supports at most {COPOSITIVE_MAX_N} variables, got {n}")
    if resolution < 1:
        raise ShapeError(f"resolution must be >= 1, got {resolution}")
    total = comb(resolution + n - 1, n - 1)
    if total > MAX_GRID_POINTS:
        raise ScaleError(f"{total} grid points at resolution {resolution} exceed the limit of {MAX_GRID_POINTS}")

    best_value = np.inf
    best_point = None
    for points in _simplex_grid(n, resolution):
        values = np.einsum('ij,jk,ik->i', points, M, points)
        i = int(np.argmin(values))
        if values[i] < best_value:
            best_value = float(values[i])
            best_point = points[i].copy()

    if best_value < -COPOSITIVE_SLACK:
        value = float(best_point @ M @ best_point)
        if value < 0:
            return CopositivityVerdict(False, value, best_point, total)
        logger.warning("grid minimum %.3e did not survive re-evaluation", best_value)
    return CopositivityVerdict(True, best_value, None, total)


def dense_expand(net: RGNetwork, x: np.ndarray = None) -> DenseQP:
    """
    Expand the layered network into an explicit QP over the latent variables

    Variables are ordered layer-major, then channel, row, column. When x
    is given, the bottom-up contribution of the observed image is folded
    into the first layer's linear term.

    Raises:
        ScaleError: more than DENSE_MAX_VARIABLES latent variables
    """
    shapes = net.layer_shapes()
    sizes = [int(np.prod(s)) for s in shapes]
    n = sum(sizes)
    if n > DENSE_MAX_VARIABLES:
        raise ScaleError(f"network has {n} latent variables, dense expansion supports {DENSE_MAX_VARIABLES}")
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    W = -np.eye(n)
    for i in range(1, net.n_layers):
        lo, lo_end = offsets[i - 1], offsets[i]
        hi, hi_end = offsets[i], offsets[i + 1]
        block = np.zeros((sizes[i], sizes[i - 1]))
        basis = np.zeros(sizes[i - 1])
        for j in range(sizes[i - 1]):
            basis[j] = 1.0
            block[:, j] = correlate(net.filters[i], basis.reshape(shapes[i - 1])).ravel()
            basis[j] = 0.0
        W[hi:hi_end, lo:lo_end] = block
        W[lo:lo_end, hi:hi_end] = block.T

    b = np.concatenate([np.repeat(bias, h * w) for bias, (_, h, w) in zip(net.biases, shapes)])
    if x is not None:
        b[:sizes[0]] += correlate(net.filters[0], x).ravel()

    groups = []
    for cfg, (c, h, w), start in zip(net.layers, shapes, offsets):
        if cfg.nms_group is None:
            continue
        g_h, g_w = cfg.nms_group
        idx = start + np.arange(c * h * w).reshape(c, h // g_h, g_h, w // g_w, g_w)
        groups.extend(idx.transpose(0, 1, 3, 2, 4).reshape(-1, g_h * g_w))
    return DenseQP(W=W, b=b, groups=groups)


def layered_score(net: RGNetwork, x: np.ndarray, states) -> float:
    """The network energy computed layer by layer: sum of -1/2|z_i|^2 + b_i.z_i + z_i.(w_i * z_{i-1})"""
    total = 0.0
    below = x
    for f, bias, z in zip(net.filters, net.biases, states):
        total += -0.5 * float(np.sum(z * z))
        total += float(np.sum(bias * z.sum(axis=(1, 2))))
        total += float(np.sum(z * correlate(f, below)))
        below = z
    return total


def replicate_filter(f: FilterBank, group: Tuple[int, int]) -> FilterBank:
    """
    Replicate every tap of f over a g x g block

    Applied with stride g to an NMS layer whose groups are g x g, the
    result sees each group's single surviving value exactly as f sees the
    max-pooled layer.
    """
    g_h, g_w = group
    if g_h != g_w:
        raise ShapeError(f"replication needs square groups, got {group}")
    weights = np.repeat(np.repeat(f.weights, g_h, axis=2), g_w, axis=3)
    if f.stride != 1:
        raise ShapeError("only stride-1 filters can be replicated")
    return FilterBank(weights, stride=g_h, pad=f.pad * g_h)
