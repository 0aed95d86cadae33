"""Dense descriptor flow between two patches.

Per-pixel 128-d gradient-orientation descriptors are matched with a
truncated-L1 data term, a small-displacement prior and a truncated-L1
smoothness term on each flow component.  The discrete energy is minimised
coarse-to-fine with min-sum belief propagation; labels at each level are
integer offsets within ``radius`` of the upsampled coarser flow.

Flow convention: ``flow[y, x] = (u, v)`` such that the target patch sampled
at ``(x + u, y + v)`` matches the reference patch at ``(x, y)``.
"""
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels

N_BINS = 8
N_CELLS = 4
CELL = 4
DESC_DIM = N_CELLS * N_CELLS * N_BINS
MIN_PATCH = 16


@dataclass(frozen=True)
class FlowParams:
    radius: int = 5
    trunc: float = 10.0  # data term truncation t
    eta: float = 0.1  # small-displacement weight
    alpha: float = 4.0  # smoothness slope
    d: float = 40.0  # smoothness truncation
    n_iter: int = 60
    min_level_size: int = 16
    levels: int | None = None  # None: as many as min_level_size allows

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if min(self.trunc, self.eta, self.alpha, self.d) < 0:
            raise ValueError("flow weights must be nonnegative")
        if self.n_iter < 0:
            raise ValueError("n_iter must be >= 0")

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def dense_descriptors(gray):
    """(H, W, 128) descriptor field of a gray patch.

    4x4 cells of 4x4 pixels around every pixel, 8 orientation bins with
    linear interpolation between neighbouring bins, L2-normalised, clipped at
    0.2 and renormalised.  Neighbourhoods past the border are clamped.
    """
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2:
        raise ValueError("descriptors need a gray image")
    h, w = gray.shape
    if h < MIN_PATCH or w < MIN_PATCH:
        raise ValueError(f"patch {w}x{h} is smaller than {MIN_PATCH}x{MIN_PATCH}")
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    pos = (np.arctan2(gy, gx) % (2 * np.pi)) / (2 * np.pi / N_BINS)
    b0 = np.floor(pos).astype(np.int64) % N_BINS
    frac = pos - np.floor(pos)
    b1 = (b0 + 1) % N_BINS
    planes = np.zeros((N_BINS, h, w))
    rows, cols = np.mgrid[0:h, 0:w]
    np.add.at(planes, (b0, rows, cols), mag * (1.0 - frac))
    np.add.at(planes, (b1, rows, cols), mag * frac)

    half = N_CELLS * CELL // 2
    padded = np.pad(planes, ((0, 0), (half, half), (half, half)), mode="edge")
    integral = np.pad(padded, ((0, 0), (1, 0), (1, 0))).cumsum(1).cumsum(2)
    desc = np.empty((h, w, N_CELLS, N_CELLS, N_BINS))
    for cy in range(N_CELLS):
        ya, yb = cy * CELL, cy * CELL + CELL
        for cx in range(N_CELLS):
            xa, xb = cx * CELL, cx * CELL + CELL
            box = (integral[:, yb:yb + h, xb:xb + w] - integral[:, ya:ya + h, xb:xb + w]
                   - integral[:, yb:yb + h, xa:xa + w] + integral[:, ya:ya + h, xa:xa + w])
            desc[:, :, cy, cx, :] = np.moveaxis(box, 0, -1)
    desc = np.maximum(desc.reshape(h, w, DESC_DIM), 0.0)
    return _normalise(desc)


def _normalise(desc):
    norm = np.linalg.norm(desc, axis=2, keepdims=True)
    nz = norm > 1e-12
    out = np.where(nz, desc / np.where(nz, norm, 1.0), 0.0)
    out = np.minimum(out, 0.2)
    norm = np.linalg.norm(out, axis=2, keepdims=True)
    nz = norm > 1e-12
    return np.where(nz, out / np.where(nz, norm, 1.0), 0.0)


def downsample(desc):
    """2x2 block average, edge-padding odd sizes."""
    h, w, c = desc.shape
    ph, pw = h % 2, w % 2
    if ph or pw:
        desc = np.pad(desc, ((0, ph), (0, pw), (0, 0)), mode="edge")
    return desc.reshape(desc.shape[0] // 2, 2, desc.shape[1] // 2, 2, c).mean(axis=(1, 3))


def n_levels(shape, params):
    if params.levels is not None:
        return max(1, params.levels)
    h, w = shape
    levels = 1
    while min((h + 1) // 2, (w + 1) // 2) >= params.min_level_size:
        h, w = (h + 1) // 2, (w + 1) // 2
        levels += 1
    return levels


def estimate_flow(desc_target, desc_reference, params=FlowParams()):
    """Integer flow (H, W, 2) with the module's sign convention."""
    if desc_target.shape != desc_reference.shape:
        raise ValueError(f"descriptor fields differ: {desc_target.shape} vs {desc_reference.shape}")
    pyr0 = [np.asarray(desc_target, dtype=np.float64)]
    pyr1 = [np.asarray(desc_reference, dtype=np.float64)]
    for _ in range(n_levels(desc_target.shape[:2], params) - 1):
        pyr0.append(downsample(pyr0[-1]))
        pyr1.append(downsample(pyr1[-1]))

    cu = cv = None
    r = params.radius
    for d0, d1 in zip(reversed(pyr0), reversed(pyr1)):
        h, w = d0.shape[:2]
        if cu is None:
            cu = np.zeros((h, w), dtype=np.int64)
            cv = np.zeros((h, w), dtype=np.int64)
        else:
            cu = 2 * np.repeat(np.repeat(cu, 2, axis=0), 2, axis=1)[:h, :w]
            cv = 2 * np.repeat(np.repeat(cv, 2, axis=0), 2, axis=1)[:h, :w]
        cost = _kernels.data_cost(d0, d1, cu, cv, r, params.trunc, params.eta)
        iu, iv = _kernels.run_bp(cost, cu, cv, params.alpha, params.d, params.n_iter)
        iu, iv = _best_of_bp_and_constant(cost, cu, cv, iu, iv, params)
        cu = cu + iu - r
        cv = cv + iv - r
    return np.stack([cu, cv], axis=-1)


def level_energy(cost, cu, cv, iu, iv, params):
    """Energy of a labeling on one pyramid level, data terms read from ``cost``."""
    h, w = cu.shape
    r = params.radius
    yy, xx = np.mgrid[0:h, 0:w]
    data = cost[yy, xx, iu, iv].sum()
    smooth = 0.0
    for comp in (cu + iu - r, cv + iv - r):
        for diff in (np.diff(comp, axis=1), np.diff(comp, axis=0)):
            smooth += np.minimum(params.alpha * np.abs(diff), params.d).sum()
    return float(data + smooth)


def _best_of_bp_and_constant(cost, cu, cv, iu, iv, params):
    """Keep the BP labeling unless a constant flow has strictly lower energy.

    Loopy min-sum BP can lock two motions in place when the smoothness weight
    is large; a constant field is then often the true minimiser.  Only
    constant flows that fall inside every pixel's label window are tried.
    """
    r = params.radius
    best = level_energy(cost, cu, cv, iu, iv, params)
    best_labels = (iu, iv)
    for u in range(int(cu.max()) - r, int(cu.min()) + r + 1):
        for v in range(int(cv.max()) - r, int(cv.min()) + r + 1):
            cand = (u - cu + r, v - cv + r)
            e = level_energy(cost, cu, cv, cand[0], cand[1], params)
            if e < best:
                best, best_labels = e, cand
    return best_labels


def flow_energy(desc_target, desc_reference, flow, params=FlowParams()):
    """Full-resolution energy of an integer flow field."""
    h, w = desc_reference.shape[:2]
    u = flow[..., 0].astype(np.int64)
    v = flow[..., 1].astype(np.int64)
    yy, xx = np.mgrid[0:h, 0:w]
    xs = np.clip(xx + u, 0, w - 1)
    ys = np.clip(yy + v, 0, h - 1)
    match = np.abs(desc_target[ys, xs] - desc_reference).sum(axis=2)
    data = np.minimum(match, params.trunc).sum() + params.eta * (np.abs(u) + np.abs(v)).sum()
    smooth = 0.0
    for comp in (u, v):
        for diff in (np.diff(comp, axis=1), np.diff(comp, axis=0)):
            smooth += np.minimum(params.alpha * np.abs(diff), params.d).sum()
    return float(data + smooth)


def flow_to_color(flow, max_magnitude=None):
    """Colour-wheel rendering: hue = direction, saturation = magnitude."""
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    top = max_magnitude or (mag.max() if mag.max() > 0 else 1.0)
    hue = (np.arctan2(v, u) % (2 * np.pi)) / (2 * np.pi)
    sat = np.clip(mag / top, 0.0, 1.0)
    # hsv -> rgb with value fixed at 1
    i = np.floor(hue * 6).astype(int) % 6
    f = hue * 6 - np.floor(hue * 6)
    p = 1.0 - sat
    q = 1.0 - sat * f
    t = 1.0 - sat * (1.0 - f)
    one = np.ones_like(sat)
    table = [(one, t, p), (q, one, p), (p, one, t), (p, q, one), (t, p, one), (one, p, q)]
    rgb = np.zeros(flow.shape[:2] + (3,))
    for k, (r, g, b) in enumerate(table):
        sel = i == k
        rgb[sel] = np.stack([r[sel], g[sel], b[sel]], axis=-1)
    return rgb
