"""Exact binary s-t min-cut on 4-connected grids.

Label 0 is the source side and label 1 the sink side.  ``source_cap[p]`` is
the cost of giving ``p`` label 1 and ``sink_cap[p]`` the cost of label 0, so a
node ends up paying exactly one of them.  Pairwise capacities are symmetric
and are charged only when the two labels differ.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConstraintConflictError

HARD = 1e9
OUTSIDE = -1


@dataclass(frozen=True)
class GridGraph:
    source_cap: np.ndarray  # (H, W) cost of label 1
    sink_cap: np.ndarray  # (H, W) cost of label 0
    right_cap: np.ndarray  # (H, W-1) edge (y, x) -- (y, x+1)
    down_cap: np.ndarray  # (H-1, W) edge (y, x) -- (y+1, x)
    active: np.ndarray  # (H, W) bool

    def __post_init__(self):
        h, w = self.active.shape
        if self.source_cap.shape != (h, w) or self.sink_cap.shape != (h, w):
            raise ValueError("terminal capacity arrays must match the grid shape")
        if self.right_cap.shape != (h, w - 1) or self.down_cap.shape != (h - 1, w):
            raise ValueError("edge capacity arrays have the wrong shape")
        for arr in (self.source_cap, self.sink_cap, self.right_cap, self.down_cap):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ValueError("capacities must be finite and nonnegative")

    @property
    def height(self):
        return self.active.shape[0]

    @property
    def width(self):
        return self.active.shape[1]

    @classmethod
    def from_arrays(cls, source_cap, sink_cap, right_cap, down_cap, active=None):
        """Build a graph, zeroing edges that touch an inactive node."""
        source_cap = np.asarray(source_cap, dtype=np.float64)
        sink_cap = np.asarray(sink_cap, dtype=np.float64)
        if active is None:
            active = np.ones(source_cap.shape, dtype=bool)
        active = np.asarray(active, dtype=bool)
        right = np.where(active[:, :-1] & active[:, 1:], np.asarray(right_cap, dtype=np.float64), 0.0)
        down = np.where(active[:-1, :] & active[1:, :], np.asarray(down_cap, dtype=np.float64), 0.0)
        return cls(np.where(active, source_cap, 0.0), np.where(active, sink_cap, 0.0), right, down, active)


@dataclass(frozen=True)
class CutResult:
    labels: np.ndarray  # (H, W) int8, OUTSIDE on inactive nodes
    cut_cost: float


def energy_of(graph, labels):
    """Data plus pairwise cost of a labeling (inactive nodes ignored)."""
    act = graph.active
    lab = np.asarray(labels)
    one = act & (lab == 1)
    zero = act & (lab == 0)
    total = graph.source_cap[one].sum() + graph.sink_cap[zero].sum()
    differ_r = act[:, :-1] & act[:, 1:] & (lab[:, :-1] != lab[:, 1:])
    differ_d = act[:-1, :] & act[1:, :] & (lab[:-1, :] != lab[1:, :])
    total += graph.right_cap[differ_r].sum() + graph.down_cap[differ_d].sum()
    return float(total)


def _neighbours(active):
    h, w = active.shape
    idx = np.arange(h * w).reshape(h, w)
    nbr = np.full((h, w, 4), -1, dtype=np.int64)
    nbr[:, :-1, 0] = idx[:, 1:]
    nbr[:-1, :, 1] = idx[1:, :]
    nbr[:, 1:, 2] = idx[:, :-1]
    nbr[1:, :, 3] = idx[:-1, :]
    ok = np.zeros((h, w, 4), dtype=bool)
    ok[:, :-1, 0] = active[:, :-1] & active[:, 1:]
    ok[:-1, :, 1] = active[:-1, :] & active[1:, :]
    ok[:, 1:, 2] = ok[:, :-1, 0]
    ok[1:, :, 3] = ok[:-1, :, 1]
    nbr[~ok] = -1
    return nbr.reshape(h * w, 4)


def solve_mincut(graph):
    """Globally optimal binary labeling of ``graph``.

    Raises ConstraintConflictError when some node is forced to both labels.
    """
    act = graph.active
    if not act.any():
        raise ValueError("graph has no active node")
    both = act & (graph.source_cap >= HARD) & (graph.sink_cap >= HARD)
    if both.any():
        y, x = np.argwhere(both)[0]
        raise ConstraintConflictError(f"node ({y}, {x}) is forced to both labels")

    # solve on the bounding box of the active nodes
    rows = np.flatnonzero(act.any(axis=1))
    cols = np.flatnonzero(act.any(axis=0))
    y0, y1, x0, x1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    sub_act = act[y0:y1, x0:x1]
    src = np.where(sub_act, graph.source_cap[y0:y1, x0:x1], 0.0)
    snk = np.where(sub_act, graph.sink_cap[y0:y1, x0:x1], 0.0)
    h, w = sub_act.shape

    # reparametrise: every node pays min(src, snk) regardless of its label
    offset = float(np.minimum(src, snk).sum())
    tr = (src - snk).ravel().astype(np.float64)

    rc = np.zeros((h, w, 4))
    right = graph.right_cap[y0:y1, x0:x1 - 1] if w > 1 else np.zeros((h, 0))
    down = graph.down_cap[y0:y1 - 1, x0:x1] if h > 1 else np.zeros((0, w))
    rc[:, :-1, 0] = right
    rc[:-1, :, 1] = down
    rc[:, 1:, 2] = right
    rc[1:, :, 3] = down
    nbr = _neighbours(sub_act)
    rc = rc.reshape(h * w, 4)
    rc[nbr < 0] = 0.0

    flow, tree = _kernels.grid_maxflow(tr, np.ascontiguousarray(rc), nbr)

    labels = np.full(act.shape, OUTSIDE, dtype=np.int8)
    sub = np.where(tree.reshape(h, w) == _kernels.SRC, 0, 1).astype(np.int8)
    labels[y0:y1, x0:x1] = np.where(sub_act, sub, OUTSIDE)
    cost = offset + float(flow)
    if cost >= HARD:
        raise ConstraintConflictError("hard constraints cannot all be satisfied")
    return CutResult(labels=labels, cut_cost=cost)
