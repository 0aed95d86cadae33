"""Local patch realignment of misaligned seam segments.

The seam is scored, misaligned runs are boxed into patches, and each patch is
processed once, in seam order, against the current (already partly rewritten)
images: dense flow from target to reference, flow attenuated by a sigmoid
ramp across the patch, target warped, the patch re-cut with its border labels
pinned, and the result pasted back.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import PatchSkipped
from .flow import FlowParams, dense_descriptors, estimate_flow
from .imaging import luminance, sample_many
from .mincut import OUTSIDE, solve_mincut
from .quality import detect_misaligned, enclosing_patches, evaluate_seam
from .seam import NO_CONSTRAINT, boundary_anchors, build_energy, effective_labels, extract_seam_path

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LpamConfig:
    window: int = 21
    k: float = 1.5
    beta: float = 8.0
    margin: int = 21
    merge_gap: int = 5
    min_run: int = 3
    max_flagged: float = 0.2
    flow: FlowParams = field(default_factory=FlowParams)

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 3")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")


@dataclass(frozen=True)
class StitchState:
    pair: object  # AlignedPair holding the current I0^i, I1^i
    labels: np.ndarray
    seam: object
    iteration: int = 0


@dataclass(frozen=True)
class LocalCut:
    labels: np.ndarray  # region-sized, OUTSIDE off the overlap
    seam: object  # None when the region is forced to a single label
    cost: float


@dataclass
class LpamResult:
    pair: object
    labels: np.ndarray
    seam: object
    report: dict
    flows: list = field(default_factory=list)  # (region, flow) per processed patch


def sigmoid_weight(t, beta=8.0):
    """1 / (1 + exp(-beta (t - 0.5)))."""
    return 1.0 / (1.0 + np.exp(-beta * (np.asarray(t, dtype=np.float64) - 0.5)))


def ramp_coordinate(region):
    """Normalised t in [0, 1] over the region, 0 on the region's t0 side."""
    rect = region.rect
    n = rect.width if region.axis == "horizontal" else rect.height
    t = np.full(n, 0.5) if n == 1 else np.arange(n) / (n - 1)
    if region.t0_side in ("right", "bottom"):
        t = 1.0 - t
    if region.axis == "horizontal":
        return np.broadcast_to(t[None, :], (rect.height, rect.width))
    return np.broadcast_to(t[:, None], (rect.height, rect.width))


def patch_flow(state, region, params):
    """Flow from the target patch to the reference patch of the current state.

    Pixels valid in only one image borrow the other image's colour so both
    patches agree outside the overlap.
    """
    ys, xs = region.rect.slices
    pair = state.pair
    t = luminance(pair.target[ys, xs])
    r = luminance(pair.reference[ys, xs])
    mt = pair.target_mask[ys, xs]
    mr = pair.reference_mask[ys, xs]
    t_filled = np.where(mt, t, np.where(mr, r, 0.0))
    r_filled = np.where(mr, r, np.where(mt, t, 0.0))
    return estimate_flow(dense_descriptors(t_filled), dense_descriptors(r_filled), params)


def warp_patch(state, region, flow, beta=8.0, max_flagged=0.2):
    """Warp the target patch by the ramp-weighted flow.

    Returns (warped target patch, reference patch, flagged mask).  Samples that
    touch invalid target pixels keep their unwarped value and are flagged;
    PatchSkipped is raised when more than ``max_flagged`` of the valid target
    pixels are flagged.
    """
    rect = region.rect
    ys, xs = rect.slices
    if flow.shape[:2] != (rect.height, rect.width):
        raise ValueError("flow does not match the region size")
    pair = state.pair
    f = sigmoid_weight(ramp_coordinate(region), beta)
    gy, gx = np.mgrid[rect.y0:rect.y1, rect.x0:rect.x1]
    sx = gx + f * flow[..., 0]
    sy = gy + f * flow[..., 1]
    vals, ok = sample_many(pair.target, pair.target_mask, sx, sy)
    original = pair.target[ys, xs]
    valid = pair.target_mask[ys, xs]
    flagged = valid & ~ok
    use = valid & ok
    warped = original.copy()
    warped[use] = vals[use]
    n_valid = int(valid.sum())
    if n_valid and flagged.sum() > max_flagged * n_valid:
        raise PatchSkipped(f"{flagged.sum()} of {n_valid} warped samples left the valid target area")
    return warped, pair.reference[ys, xs].copy(), flagged


def _border(shape):
    b = np.zeros(shape, dtype=bool)
    b[0, :] = b[-1, :] = True
    b[:, 0] = b[:, -1] = True
    return b


def local_seam(state, region, warped_target, reference_patch):
    """Re-cut the region with its border pinned to the current labels."""
    ys, xs = region.rect.slices
    sub = state.pair.replace(target=warped_target, reference=reference_patch,
                             target_mask=state.pair.target_mask[ys, xs],
                             reference_mask=state.pair.reference_mask[ys, xs])
    overlap = sub.target_mask & sub.reference_mask
    current = state.labels[ys, xs]
    if not overlap.any():
        return LocalCut(labels=current.copy(), seam=None, cost=0.0)
    constraints = np.full(overlap.shape, NO_CONSTRAINT, dtype=np.int8)
    pin = overlap & _border(overlap.shape)
    constraints[pin] = current[pin]

    anchors, _ = boundary_anchors(sub.target_mask, sub.reference_mask)
    forced = np.where(constraints != NO_CONSTRAINT, constraints, anchors)[overlap]
    present = set(np.unique(forced[forced != NO_CONSTRAINT]).tolist())
    if len(present) < 2:
        fill = present.pop() if present else 0
        labels = np.where(overlap, fill, OUTSIDE).astype(np.int8)
        return LocalCut(labels=labels, seam=None, cost=0.0)

    cut = solve_mincut(build_energy(sub, constraints=constraints))
    return LocalCut(labels=cut.labels, seam=extract_seam_path(cut.labels), cost=cut.cut_cost)


def merge_step(state, region, warped_target, reference_patch, local_labels):
    """Paste patches and local labels into the state and re-derive the seam."""
    ys, xs = region.rect.slices
    pair = state.pair
    target = pair.target.copy()
    reference = pair.reference.copy()
    valid_t = pair.target_mask[ys, xs]
    valid_r = pair.reference_mask[ys, xs]
    target[ys, xs][valid_t] = warped_target[valid_t]
    reference[ys, xs][valid_r] = reference_patch[valid_r]
    labels = state.labels.copy()
    overlap = valid_t & valid_r
    labels[ys, xs][overlap] = np.asarray(local_labels)[overlap]
    return StitchState(pair=pair.replace(target=target, reference=reference), labels=labels,
                       seam=extract_seam_path(labels), iteration=state.iteration + 1)


def _in_rect(pixels, rect):
    p = np.asarray(pixels)
    sel = (p[:, 0] >= rect.y0) & (p[:, 0] < rect.y1) & (p[:, 1] >= rect.x0) & (p[:, 1] < rect.x1)
    return p[sel]


def _mean_q(pair, pixels, window):
    if len(pixels) == 0:
        return None
    return float(evaluate_seam(pair, pixels, window).values.mean())


def run_lpam(pair, labels, seam, config=LpamConfig()):
    """Single pass of local patch realignment over every misaligned component."""
    clock = {}

    def tick(stage, t0):
        clock[stage] = clock.get(stage, 0.0) + (time.perf_counter() - t0) * 1e3

    t_all = time.perf_counter()
    t0 = time.perf_counter()
    profile = evaluate_seam(pair, seam, config.window)
    tick("evaluate", t0)
    t0 = time.perf_counter()
    comps = detect_misaligned(profile, config.k, seam, config.merge_gap, config.min_run)
    tick("detect", t0)

    report = {"plausible": not comps, "seam_length": int(len(seam)), "multi_chain": seam.multi_chain,
              "initial_mean_q": float(profile.values.mean()),
              "initial_max_q": float(profile.values.max()),
              "tau": comps[0].tau if comps else None, "components": []}
    result = LpamResult(pair=pair, labels=labels, seam=seam, report=report)
    if not comps:
        clock["total"] = (time.perf_counter() - t_all) * 1e3
        report["elapsed_ms"] = clock
        return result

    regions = enclosing_patches(comps, effective_labels(pair, labels), config.margin)
    state = StitchState(pair=pair, labels=labels, seam=seam)
    for region in regions:
        members = np.concatenate([comps[i].members for i in region.component_ids])
        entry = {"range": list(region.seam_range), "component_ids": list(region.component_ids),
                 "rect": region.rect.as_list(), "axis": region.axis, "t0_side": region.t0_side,
                 "pre_mean_q": float(profile.values[members].mean()),
                 "pre_region_mean_q": _mean_q(state.pair, _in_rect(state.seam.pixels, region.rect),
                                              config.window),
                 "post_mean_q": None, "skipped": False, "reason": None}
        try:
            t0 = time.perf_counter()
            flow = patch_flow(state, region, config.flow)
            tick("flow", t0)
            t0 = time.perf_counter()
            warped, ref_patch, flagged = warp_patch(state, region, flow, config.beta, config.max_flagged)
            entry["flagged_fraction"] = float(flagged.mean())
            tick("warp", t0)
            t0 = time.perf_counter()
            cut = local_seam(state, region, warped, ref_patch)
            tick("local_seam", t0)
            if cut.seam is None:
                raise PatchSkipped("patch border carries a single label; the seam does not cross it")
            t0 = time.perf_counter()
            state = merge_step(state, region, warped, ref_patch, cut.labels)
            tick("merge", t0)
            entry["local_cut_cost"] = cut.cost
            entry["post_mean_q"] = _mean_q(state.pair, _in_rect(state.seam.pixels, region.rect),
                                           config.window)
            result.flows.append((region, flow))
        except Exception as exc:  # a failed patch leaves the seam there untouched
            logger.warning("skipping patch %s: %s", region.rect.as_list(), exc)
            entry["skipped"] = True
            entry["reason"] = f"{type(exc).__name__}: {exc}"
        report["components"].append(entry)

    clock["total"] = (time.perf_counter() - t_all) * 1e3
    report["elapsed_ms"] = clock
    result.pair = state.pair
    result.labels = state.labels
    result.seam = state.seam
    return result
