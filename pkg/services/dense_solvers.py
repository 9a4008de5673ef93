"""Reference solvers for explicit nonnegative QPs"""
import logging
from typing import Callable, List, Optional

import numpy as np

from models.inference import CoordinateDescentResult
from models.network import DenseQP
from utils.constants import DEFAULT_TOL, DIVERGENCE_LIMIT, MAX_SWEEPS
from utils.errors import RGNetError

logger = logging.getLogger(__name__)


def update_blocks(qp: DenseQP) -> List[np.ndarray]:
    """
    Update order for one sweep

    Free variables are single-index blocks; a group is one block placed
    at its first member. Blocks follow increasing index.
    """
    owner = {}
    for g in qp.groups:
        for i in g:
            owner[int(i)] = g
    blocks, done = [], set()
    for i in range(qp.n):
        g = owner.get(i)
        if g is None:
            blocks.append(np.array([i]))
        elif id(g) not in done:
            done.add(id(g))
            blocks.append(np.sort(g))
    return blocks


def block_update(qp: DenseQP, z: np.ndarray, block: np.ndarray, grouped: bool = None) -> np.ndarray:
    """
    Maximize S over the variables of one block, in place

    A single variable takes max(0, b_i + sum_{j != i} w_ij z_j). A group
    gives the whole budget to its most strongly driven member, drives
    being computed with the rest of the group at 0.
    """
    if grouped is None:
        grouped = len(block) > 1
    if not grouped:
        i = int(block[0])
        drive = qp.b[i] + qp.W[i] @ z - qp.W[i, i] * z[i]
        z[i] = max(0.0, drive)
        return z
    drives = qp.b[block] + qp.W[block] @ z - qp.W[np.ix_(block, block)] @ z[block]
    j = int(np.argmax(drives))
    z[block] = 0.0
    z[block[j]] = max(0.0, drives[j])
    return z


def dense_coordinate_descent(qp: DenseQP, max_sweeps: int = MAX_SWEEPS, tol: float = DEFAULT_TOL,
                             callback: Optional[Callable[[np.ndarray], None]] = None
                             ) -> CoordinateDescentResult:
    """
    Cyclic coordinate (and group) ascent from z = 0

    Args:
        qp: instance with unit negative diagonal
        max_sweeps: sweep budget
        tol: stop once a sweep changes no coordinate by tol or more
        callback: called with z after every block update

    Raises:
        RGNetError: a diagonal entry of W is not -1
    """
    if not np.all(np.diag(qp.W) == -1.0):
        raise RGNetError("dense coordinate descent requires diag(W) = -1")
    group_members = {int(i) for g in qp.groups for i in g}
    blocks = [(b, int(b[0]) in group_members) for b in update_blocks(qp)]
    z = np.zeros(qp.n)
    for sweep in range(1, max_sweeps + 1):
        previous = z.copy()
        for block, grouped in blocks:
            block_update(qp, z, block, grouped)
            if callback is not None:
                callback(z)
        if np.max(np.abs(z), initial=0.0) > DIVERGENCE_LIMIT:
            logger.warning("coordinate descent diverged after %d sweeps (-W is not copositive?)", sweep)
            return CoordinateDescentResult(z, sweep, converged=False, diverged=True)
        if np.max(np.abs(z - previous), initial=0.0) < tol:
            logger.debug("coordinate descent converged after %d sweeps", sweep)
            return CoordinateDescentResult(z, sweep, converged=True)
    logger.warning("coordinate descent did not converge in %d sweeps", max_sweeps)
    return CoordinateDescentResult(z, max_sweeps, converged=False)


def projected_gradient(qp: DenseQP, step: float, iters: int, z0: np.ndarray = None) -> np.ndarray:
    """
    z <- max(0, z + step (Wz + b)), iterated

    Raises:
        RGNetError: the instance has exclusivity groups, or step <= 0
    """
    if qp.groups:
        raise RGNetError("projected gradient has no projection onto exclusivity groups")
    if step <= 0:
        raise RGNetError(f"step must be positive, got {step}")
    z = np.zeros(qp.n) if z0 is None else np.maximum(np.asarray(z0, dtype=np.float64), 0.0)
    for _ in range(iters):
        z = np.maximum(0.0, z + step * (qp.W @ z + qp.b))
    return z
