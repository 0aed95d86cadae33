"""Seam energy, global seam estimation, seam path extraction and compositing."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintConflictError, EmptySeamError, UnanchoredCutError
from .mincut import HARD, OUTSIDE, GridGraph, solve_mincut

NO_CONSTRAINT = -1

# 4-neighbour order used for seam normals: right, down, left, up
_N4 = ((0, 1), (1, 0), (0, -1), (-1, 0))
# greedy walk order: 4-neighbours first, then diagonals
_WALK = ((-1, 0), (0, -1), (0, 1), (1, 0), (-1, -1), (-1, 1), (1, -1), (1, 1))


@dataclass(frozen=True)
class Seam:
    """Ordered seam pixels.

    ``pixels`` is (N, 2) of (y, x); ``normals[i]`` indexes the first label-1
    4-neighbour of pixel i in (right, down, left, up) order.  ``chains`` lists
    [start, end) index ranges of 8-connected runs; more than one chain means
    the boundary branched or split.
    """

    pixels: np.ndarray
    normals: np.ndarray
    chains: list = field(default_factory=list)

    def __len__(self):
        return len(self.pixels)

    @property
    def multi_chain(self):
        return len(self.chains) > 1

    def chain_id(self):
        ids = np.zeros(len(self.pixels), dtype=np.int64)
        for c, (a, b) in enumerate(self.chains):
            ids[a:b] = c
        return ids


def euclidean_smoothness(target, reference):
    """Baseline seam cost: |I0(p)-I1(p)| + |I0(q)-I1(q)| for each 4-edge."""
    diff = np.sqrt(((target - reference) ** 2).sum(axis=2))
    return diff[:, :-1] + diff[:, 1:], diff[:-1, :] + diff[1:, :]


def boundary_anchors(target_mask, reference_mask):
    """Hard labels for overlap pixels touching single-image regions."""
    overlap = target_mask & reference_mask
    only_t = target_mask & ~reference_mask
    only_r = reference_mask & ~target_mask
    near_t = _touches(only_t)
    near_r = _touches(only_r)
    anchors = np.full(overlap.shape, NO_CONSTRAINT, dtype=np.int8)
    anchors[overlap & near_t] = 0
    anchors[overlap & near_r] = 1
    clash = overlap & near_t & near_r
    return anchors, clash


def _touches(region):
    out = np.zeros_like(region)
    out[:, :-1] |= region[:, 1:]
    out[:, 1:] |= region[:, :-1]
    out[:-1, :] |= region[1:, :]
    out[1:, :] |= region[:-1, :]
    return out


def build_energy(pair, constraints=None, smoothness=euclidean_smoothness):
    """Seam-cutting graph over the overlap of ``pair``.

    ``constraints`` is an optional (H, W) int array of forced labels with -1
    meaning free.  ``smoothness(target, reference)`` returns the horizontal
    and vertical edge cost arrays.
    """
    overlap = pair.target_mask & pair.reference_mask
    if not overlap.any():
        raise ValueError("empty overlap")
    anchors, clash = boundary_anchors(pair.target_mask, pair.reference_mask)
    if clash.any():
        y, x = np.argwhere(clash)[0]
        raise ConstraintConflictError(f"overlap pixel ({y}, {x}) borders both single-image regions")
    forced = anchors.copy()
    if constraints is not None:
        constraints = np.asarray(constraints)
        c_on = overlap & (constraints != NO_CONSTRAINT)
        conflict = c_on & (anchors != NO_CONSTRAINT) & (anchors != constraints)
        if conflict.any():
            y, x = np.argwhere(conflict)[0]
            raise ConstraintConflictError(f"constraint at ({y}, {x}) contradicts its boundary anchor")
        forced[c_on] = constraints[c_on]
    else:
        has0 = (forced[overlap] == 0).any()
        has1 = (forced[overlap] == 1).any()
        if not (has0 and has1):
            raise UnanchoredCutError("overlap lacks an anchor for label " + ("0" if not has0 else "1"))

    source = np.where(overlap & (forced == 0), HARD, 0.0)  # label 1 forbidden
    sink = np.where(overlap & (forced == 1), HARD, 0.0)  # label 0 forbidden
    right, down = smoothness(pair.target, pair.reference)
    return GridGraph.from_arrays(source, sink, right, down, overlap)


def extract_seam_path(labels):
    """Label-0 pixels with a label-1 4-neighbour, ordered by a greedy walk."""
    labels = np.asarray(labels)
    h, w = labels.shape
    one = labels == 1
    boundary = np.zeros((h, w), dtype=bool)
    normals = np.full((h, w), -1, dtype=np.int8)
    for k in range(3, -1, -1):
        dy, dx = _N4[k]
        nb = np.zeros((h, w), dtype=bool)
        nb[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)] = \
            one[max(0, dy):h - max(0, -dy), max(0, dx):w - max(0, -dx)]
        hit = (labels == 0) & nb
        normals[hit] = k
        boundary |= hit
    if not boundary.any():
        raise EmptySeamError("label mask has no 0/1 boundary")

    remaining = boundary.copy()
    order = []
    chains = []
    coords = np.argwhere(boundary)  # row-major, i.e. sorted by (y, x)
    cursor = 0
    while True:
        while cursor < len(coords) and not remaining[coords[cursor][0], coords[cursor][1]]:
            cursor += 1
        if cursor == len(coords):
            break
        y, x = coords[cursor]
        start = len(order)
        while True:
            remaining[y, x] = False
            order.append((y, x))
            for dy, dx in _WALK:
                ny, nx = y + dy, x + dx
                if 0 <= ny < h and 0 <= nx < w and remaining[ny, nx]:
                    y, x = ny, nx
                    break
            else:
                break
        chains.append((start, len(order)))
    pixels = np.array(order, dtype=np.int64)
    return Seam(pixels=pixels, normals=normals[pixels[:, 0], pixels[:, 1]].astype(np.int8), chains=chains)


def estimate_seam(pair, smoothness=euclidean_smoothness):
    """Global seam-cutting: returns (labels, seam)."""
    cut = solve_mincut(build_energy(pair, smoothness=smoothness))
    return cut.labels, extract_seam_path(cut.labels)


def effective_labels(pair, labels):
    """Label map extended to single-image pixels (0 target-only, 1 reference-only)."""
    eff = np.full(pair.shape, OUTSIDE, dtype=np.int8)
    eff[pair.target_mask & ~pair.reference_mask] = 0
    eff[pair.reference_mask & ~pair.target_mask] = 1
    overlap = pair.target_mask & pair.reference_mask
    eff[overlap] = np.asarray(labels)[overlap]
    return eff


def composite(pair, labels):
    """Mosaic RGB image and its coverage mask."""
    eff = effective_labels(pair, labels)
    out = np.zeros(pair.target.shape)
    out[eff == 0] = pair.target[eff == 0]
    out[eff == 1] = pair.reference[eff == 1]
    return out, eff != OUTSIDE
