"""Per-pixel seam quality, misaligned-component detection and seam metrics."""
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import EmptySeamError, SeamweldError
from .imaging import Rect, luminance

C1 = 0.01 ** 2
C2 = 0.03 ** 2
PSNR_CAP = 100.0
MIN_WINDOW_PIXELS = 9
OTSU_BINS = 256


@dataclass(frozen=True)
class QualityProfile:
    values: np.ndarray  # Q per seam pixel, in [0, 2]
    window: int
    scored: np.ndarray  # False where Q was copied from a neighbour

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class MisalignedComponent:
    start: int  # inclusive seam index
    stop: int  # inclusive seam index
    members: np.ndarray  # seam indices in [start, stop] with Q >= tau
    pixels: np.ndarray  # (n, 2) (y, x) of members
    tau: float

    @property
    def range(self):
        return (self.start, self.stop)


@dataclass(frozen=True)
class PatchRegion:
    rect: Rect
    axis: str  # "horizontal": t runs along x; "vertical": t runs along y
    t0_side: str  # "left"/"right" or "top"/"bottom"
    component_ids: tuple
    seam_range: tuple  # (first, last) seam index covered by the components


@dataclass(frozen=True)
class SeamMetrics:
    rmse: float
    psnr: float
    ssim: float
    zncc: float
    seam_length: int
    window: int

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def ssim_patch(p0, p1):
    """Single-window SSIM of two equally sized gray patches."""
    a = np.asarray(p0, dtype=np.float64).ravel()
    b = np.asarray(p1, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"patch sizes differ: {np.shape(p0)} vs {np.shape(p1)}")
    if a.size < 2:
        raise ValueError("SSIM needs at least two pixels")
    mu0 = a.mean()
    mu1 = b.mean()
    da = a - mu0
    db = b - mu1
    var0 = (da * da).mean()
    var1 = (db * db).mean()
    cov = (da * db).mean()
    return float(((2 * mu0 * mu1 + C1) * (2 * cov + C2))
                 / ((mu0 * mu0 + mu1 * mu1 + C1) * (var0 + var1 + C2)))


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------

def _run_extent(line, i):
    """Number of consecutive True cells on each side of ``line[i]``."""
    lo = i
    while lo > 0 and line[lo - 1]:
        lo -= 1
    hi = i
    n = len(line)
    while hi < n - 1 and line[hi + 1]:
        hi += 1
    return i - lo, hi - i


def seam_windows(overlap, pixels, window):
    """Centred window half-sizes (hy, hx) per seam pixel.

    Each half-size starts at window // 2, is cut to the contiguous overlap run
    through the pixel along its axis, then the larger one is shrunk until the
    whole rectangle lies inside the overlap.  Half-sizes of -1 mark pixels
    that are not in the overlap at all.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    half = window // 2
    integral = np.pad(overlap.astype(np.int64), ((1, 0), (1, 0))).cumsum(0).cumsum(1)

    def full(y, x, hy, hx):
        y0, y1, x0, x1 = y - hy, y + hy + 1, x - hx, x + hx + 1
        s = integral[y1, x1] - integral[y0, x1] - integral[y1, x0] + integral[y0, x0]
        return s == (y1 - y0) * (x1 - x0)

    out = np.empty((len(pixels), 2), dtype=np.int64)
    for i, (y, x) in enumerate(pixels):
        if not overlap[y, x]:
            out[i] = (-1, -1)
            continue
        left, right = _run_extent(overlap[y], x)
        up, down = _run_extent(overlap[:, x], y)
        hx = min(half, left, right)
        hy = min(half, up, down)
        while not full(y, x, hy, hx):
            if hx > hy:
                hx -= 1
            elif hy > hx:
                hy -= 1
            else:
                hx -= 1
                hy -= 1
        out[i] = (hy, hx)
    return out


def _fill_unscored(values, scored):
    if scored.all():
        return values
    if not scored.any():
        raise SeamweldError("no seam pixel has a window with enough valid pixels")
    idx = np.flatnonzero(scored)
    out = values.copy()
    for i in np.flatnonzero(~scored):
        j = np.searchsorted(idx, i)
        cands = [idx[k] for k in (j - 1, j) if 0 <= k < len(idx)]
        nearest = min(cands, key=lambda c: (abs(c - i), c))
        out[i] = values[nearest]
    return out


def _patch_pairs(gray0, gray1, overlap, pixels, window):
    halves = seam_windows(overlap, pixels, window)
    for (y, x), (hy, hx) in zip(pixels, halves):
        if hy < 0 or (2 * hy + 1) * (2 * hx + 1) < MIN_WINDOW_PIXELS:
            yield None
            continue
        sl = (slice(y - hy, y + hy + 1), slice(x - hx, x + hx + 1))
        yield gray0[sl], gray1[sl]


def _seam_pixels(seam):
    pixels = np.asarray(getattr(seam, "pixels", seam))
    if len(pixels) == 0:
        raise EmptySeamError("seam is empty")
    return pixels


def evaluate_seam(pair, seam, window=21):
    """Q = 1 - SSIM of the gray windows centred on every seam pixel."""
    pixels = _seam_pixels(seam)
    g0 = luminance(pair.target)
    g1 = luminance(pair.reference)
    overlap = pair.target_mask & pair.reference_mask
    values = np.zeros(len(pixels))
    scored = np.zeros(len(pixels), dtype=bool)
    for i, pp in enumerate(_patch_pairs(g0, g1, overlap, pixels, window)):
        if pp is not None:
            values[i] = 1.0 - ssim_patch(*pp)
            scored[i] = True
    return QualityProfile(values=_fill_unscored(values, scored), window=window, scored=scored)


# ---------------------------------------------------------------------------
# thresholding and components
# ---------------------------------------------------------------------------

def otsu_threshold(values, bins=OTSU_BINS):
    """Bin edge maximising between-class variance, or None if all values are equal.

    Values are histogrammed into ``bins`` uniform bins over [min, max]; class
    means use the actual values, not bin centres.  Ties resolve to the lowest
    edge.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size < 2:
        raise ValueError("need at least two values")
    lo = v.min()
    hi = v.max()
    if hi <= lo:
        return None
    width = (hi - lo) / bins
    idx = np.clip(((v - lo) / width).astype(np.int64), 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    sums = np.bincount(idx, weights=v, minlength=bins)
    n = v.size
    total = sums.sum()
    c0 = np.cumsum(counts)[:-1]  # class 0 = bins [0, k) for edge k = 1..bins-1
    s0 = np.cumsum(sums)[:-1]
    c1 = n - c0
    s1 = total - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.where((c0 > 0) & (c1 > 0),
                       (c0 / n) * (c1 / n) * (s0 / c0 - s1 / c1) ** 2, 0.0)
    k = int(np.argmax(var)) + 1
    return lo + k * width


def detect_misaligned(profile, k=1.5, seam=None, merge_gap=5, min_run=3):
    """Components of consecutive seam pixels with Q >= tau.

    Returns [] when the seam is plausible (max Q <= k * mean Q).  Runs in the
    same seam chain separated by at most ``merge_gap`` pixels merge;
    components with fewer than ``min_run`` flagged pixels are dropped.
    """
    q = np.asarray(getattr(profile, "values", profile), dtype=np.float64)
    if q.size == 0:
        raise EmptySeamError("empty quality profile")
    if q.max() <= k * q.mean():
        return []
    tau = otsu_threshold(q)
    if tau is None:
        return []
    flag = q >= tau
    chain = seam.chain_id() if seam is not None else np.zeros(q.size, dtype=np.int64)
    pixels = np.asarray(seam.pixels) if seam is not None else np.zeros((q.size, 2), dtype=np.int64)

    runs = []
    i = 0
    while i < q.size:
        if not flag[i]:
            i += 1
            continue
        j = i
        while j + 1 < q.size and flag[j + 1] and chain[j + 1] == chain[i]:
            j += 1
        if runs and i - runs[-1][1] - 1 <= merge_gap and chain[i] == chain[runs[-1][1]]:
            runs[-1][1] = j
        else:
            runs.append([i, j])
        i = j + 1

    out = []
    for a, b in runs:
        members = np.flatnonzero(flag[a:b + 1]) + a
        if members.size >= min_run:
            out.append(MisalignedComponent(start=a, stop=b, members=members,
                                           pixels=pixels[members], tau=float(tau)))
    return out


def _box(pixels, margin, shape):
    h, w = shape
    ys = pixels[:, 0]
    xs = pixels[:, 1]
    return Rect(max(0, int(xs.min()) - margin), max(0, int(ys.min()) - margin),
                min(w, int(xs.max()) + margin + 1), min(h, int(ys.max()) + margin + 1))


def enclosing_patches(components, eff_labels, margin=21):
    """Merged rectangles around components, with modulation axis and t=0 side.

    ``eff_labels`` is the canvas label map including single-image pixels (see
    :func:`seam.effective_labels`); it decides which side of a patch is the
    target side.
    """
    shape = eff_labels.shape
    groups = [dict(rect=_box(c.pixels, margin, shape), ids=[i], pixels=c.pixels,
                   lo=c.start, hi=c.stop) for i, c in enumerate(components)]
    merged = True
    while merged:
        merged = False
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                if groups[i]["rect"].intersects(groups[j]["rect"]):
                    gi, gj = groups[i], groups.pop(j)
                    gi["rect"] = gi["rect"].union(gj["rect"])
                    gi["ids"] = sorted(gi["ids"] + gj["ids"])
                    gi["pixels"] = np.vstack([gi["pixels"], gj["pixels"]])
                    gi["lo"] = min(gi["lo"], gj["lo"])
                    gi["hi"] = max(gi["hi"], gj["hi"])
                    merged = True
                    break
            if merged:
                break

    regions = []
    for g in sorted(groups, key=lambda g: g["lo"]):
        rect = g["rect"]
        px = g["pixels"]
        rows = px[:, 0].max() - px[:, 0].min() + 1
        cols = px[:, 1].max() - px[:, 1].min() + 1
        ys, xs = rect.slices
        if rows > cols:
            axis = "horizontal"
            first, second = eff_labels[ys, rect.x0], eff_labels[ys, rect.x1 - 1]
            sides = ("left", "right")
        else:
            axis = "vertical"
            first, second = eff_labels[rect.y0, xs], eff_labels[rect.y1 - 1, xs]
            sides = ("top", "bottom")
        t0 = sides[0] if _zero_fraction(first) >= _zero_fraction(second) else sides[1]
        regions.append(PatchRegion(rect=rect, axis=axis, t0_side=t0,
                                   component_ids=tuple(g["ids"]), seam_range=(g["lo"], g["hi"])))
    return regions


def _zero_fraction(edge):
    valid = edge >= 0
    if not valid.any():
        return 0.0
    return float((edge[valid] == 0).mean())


# ---------------------------------------------------------------------------
# seam metrics
# ---------------------------------------------------------------------------

def _zncc(a, b):
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom < 1e-12:
        return 1.0 if np.all(np.abs(a - b) <= 1e-6) else 0.0
    return float(np.clip((da * db).sum() / denom, -1.0, 1.0))


def patch_errors(p0, p1):
    """(rmse, psnr, ssim, zncc error) of one pair of gray patches."""
    a = np.asarray(p0, dtype=np.float64).ravel()
    b = np.asarray(p1, dtype=np.float64).ravel()
    mse = float(((a - b) ** 2).mean())
    psnr = PSNR_CAP if mse < 1e-10 else min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))
    return np.sqrt(mse), psnr, ssim_patch(a, b), (1.0 - _zncc(a, b)) / 2.0


def seam_metrics(pair, seam, window=21):
    """Seam-averaged RMSE, PSNR, SSIM and (1 - ZNCC) / 2 over gray windows."""
    pixels = _seam_pixels(seam)
    g0 = luminance(pair.target)
    g1 = luminance(pair.reference)
    overlap = pair.target_mask & pair.reference_mask
    vals = np.zeros((len(pixels), 4))
    scored = np.zeros(len(pixels), dtype=bool)
    for i, pp in enumerate(_patch_pairs(g0, g1, overlap, pixels, window)):
        if pp is not None:
            vals[i] = patch_errors(*pp)
            scored[i] = True
    cols = [_fill_unscored(vals[:, c], scored) for c in range(4)]
    return SeamMetrics(rmse=float(np.mean(cols[0])), psnr=float(np.mean(cols[1])),
                       ssim=float(np.mean(cols[2])), zncc=float(np.mean(cols[3])),
                       seam_length=int(len(pixels)), window=int(window))
