"""Images, validity masks, aligned pairs and PNG I/O.

Images are float64 numpy arrays in [0, 1], shaped (H, W, 3) for colour and
(H, W) for grayscale.  Masks are (H, W) bool arrays.
"""
import os
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from . import _kernels
from .errors import DimensionMismatchError, EmptyOverlapError, ImageReadError

ALPHA_THRESHOLD = 0.5
LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class Rect:
    """Half-open pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ValueError(f"degenerate rect {self}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def slices(self):
        return slice(self.y0, self.y1), slice(self.x0, self.x1)

    def intersects(self, other):
        return (self.x0 < other.x1 and other.x0 < self.x1
                and self.y0 < other.y1 and other.y0 < self.y1)

    def union(self, other):
        return Rect(min(self.x0, other.x0), min(self.y0, other.y0),
                    max(self.x1, other.x1), max(self.y1, other.y1))

    def contains(self, y, x):
        return self.y0 <= y < self.y1 and self.x0 <= x < self.x1

    def as_list(self):
        return [self.x0, self.y0, self.x1, self.y1]


@dataclass(frozen=True)
class AlignedPair:
    """Target I0 and reference I1 warped onto one canvas."""

    target: np.ndarray
    reference: np.ndarray
    target_mask: np.ndarray
    reference_mask: np.ndarray

    def __post_init__(self):
        shape = self.target.shape
        if self.reference.shape != shape:
            raise DimensionMismatchError(
                f"target is {shape[1]}x{shape[0]} but reference is "
                f"{self.reference.shape[1]}x{self.reference.shape[0]}")
        if self.target_mask.shape != shape[:2] or self.reference_mask.shape != shape[:2]:
            raise DimensionMismatchError("validity masks must match the image size")

    @property
    def shape(self):
        return self.target.shape[:2]

    @property
    def overlap(self):
        return compute_overlap(self)

    def replace(self, **changes):
        fields = dict(target=self.target, reference=self.reference,
                      target_mask=self.target_mask, reference_mask=self.reference_mask)
        fields.update(changes)
        return AlignedPair(**fields)


def make_pair(target, reference, target_mask=None, reference_mask=None):
    """Build an AlignedPair from arrays, zeroing colour outside the masks."""
    target = np.asarray(target, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if target_mask is None:
        target_mask = np.ones(target.shape[:2], dtype=bool)
    if reference_mask is None:
        reference_mask = np.ones(reference.shape[:2], dtype=bool)
    target_mask = np.asarray(target_mask, dtype=bool)
    reference_mask = np.asarray(reference_mask, dtype=bool)
    if target.shape != reference.shape:
        raise DimensionMismatchError(f"image shapes differ: {target.shape} vs {reference.shape}")
    target = np.where(target_mask[..., None], np.clip(target, 0.0, 1.0), 0.0)
    reference = np.where(reference_mask[..., None], np.clip(reference, 0.0, 1.0), 0.0)
    return AlignedPair(target, reference, target_mask, reference_mask)


def compute_overlap(pair):
    return pair.target_mask & pair.reference_mask


def luminance(image):
    """Rec.601 luma of an RGB image; gray input is returned unchanged.

    Written as R + wg (G - R) + wb (B - R) so that neutral pixels map to their
    own value exactly (the weights do not sum to 1 in binary floating point).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    r, g, b = image[..., 0], image[..., 1], image[..., 2]
    return np.clip(r + LUMA[1] * (g - r) + LUMA[2] * (b - r), 0.0, 1.0)


def bilinear_sample(image, mask, x, y):
    """Sample ``image`` at (x, y); None when a contributing pixel is invalid."""
    img = image if image.ndim == 3 else image[..., None]
    vals, ok = _kernels.bilinear(img, mask, np.array([x]), np.array([y]))
    if not ok[0]:
        return None
    return vals[0] if image.ndim == 3 else float(vals[0, 0])


def sample_many(image, mask, xs, ys):
    """Vectorised :func:`bilinear_sample`; returns (values, valid)."""
    img = image if image.ndim == 3 else image[..., None]
    xs = np.asarray(xs, dtype=np.float64)
    vals, ok = _kernels.bilinear(img, mask, xs, ys)
    shape = xs.shape
    vals = vals.reshape(shape + (img.shape[2],))
    if image.ndim == 2:
        vals = vals[..., 0]
    return vals, ok.reshape(shape)


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def read_rgba(path):
    try:
        with PILImage.open(path) as im:
            if "A" not in im.getbands():
                raise ImageReadError(f"{path}: image has no alpha channel")
            arr = np.asarray(im.convert("RGBA"), dtype=np.float64) / 255.0
    except ImageReadError:
        raise
    except (OSError, ValueError) as exc:
        raise ImageReadError(f"{path}: {exc}") from exc
    return arr[..., :3], arr[..., 3] > ALPHA_THRESHOLD


def load_aligned_pair(path_target, path_reference):
    t_rgb, t_mask = read_rgba(path_target)
    r_rgb, r_mask = read_rgba(path_reference)
    if t_rgb.shape != r_rgb.shape:
        raise DimensionMismatchError(
            f"target is {t_rgb.shape[1]}x{t_rgb.shape[0]}, reference is {r_rgb.shape[1]}x{r_rgb.shape[0]}")
    pair = make_pair(t_rgb, r_rgb, t_mask, r_mask)
    if not pair.overlap.any():
        raise EmptyOverlapError("the two images do not overlap")
    return pair


def _to_uint8(image):
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def _atomic_save(pil_image, path):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".png.tmp")
    os.close(fd)
    try:
        pil_image.save(tmp, format="PNG")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_image(image, path, alpha=None):
    """Write an RGB (or gray) float image as 8-bit PNG; RGBA if alpha given."""
    data = _to_uint8(image)
    if alpha is not None:
        if data.ndim == 2:
            data = np.repeat(data[..., None], 3, axis=2)
        a = np.where(np.asarray(alpha, dtype=bool), 255, 0).astype(np.uint8)
        data = np.dstack([data, a])
    _atomic_save(PILImage.fromarray(data), path)


def read_image(path):
    """Read a PNG as float RGB (alpha dropped) or gray."""
    try:
        with PILImage.open(path) as im:
            if im.mode in ("L", "1", "I", "I;16"):
                return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
            return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise ImageReadError(f"{path}: {exc}") from exc


def write_label_mask(labels, path):
    """Label mask as a 1-channel PNG, 255 for label 1 and 0 otherwise."""
    data = np.where(np.asarray(labels) == 1, 255, 0).astype(np.uint8)
    _atomic_save(PILImage.fromarray(data, mode="L"), path)


def read_label_image(path):
    try:
        with PILImage.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except (OSError, ValueError) as exc:
        raise ImageReadError(f"{path}: {exc}") from exc
    return arr > 127


# ---------------------------------------------------------------------------
# visualisation
# ---------------------------------------------------------------------------

# blue -> cyan -> green -> yellow -> red
_CMAP_STOPS = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 1.0], [0.0, 1.0, 0.0],
                        [1.0, 1.0, 0.0], [1.0, 0.0, 0.0]])


def quality_colormap(q):
    q = np.clip(np.asarray(q, dtype=np.float64), 0.0, 1.0)
    pos = q * (len(_CMAP_STOPS) - 1)
    i0 = np.minimum(np.floor(pos).astype(int), len(_CMAP_STOPS) - 2)
    frac = (pos - i0)[..., None]
    return _CMAP_STOPS[i0] * (1.0 - frac) + _CMAP_STOPS[i0 + 1] * frac


def averaged_canvas(pair):
    m0 = pair.target_mask[..., None]
    m1 = pair.reference_mask[..., None]
    count = m0.astype(float) + m1.astype(float)
    total = pair.target * m0 + pair.reference * m1
    return np.where(count > 0, total / np.maximum(count, 1.0), 0.0)


def render_seam(pair, pixels, quality, stroke=3):
    """Averaged canvas with seam pixels painted by quality (low Q first)."""
    pixels = np.asarray(pixels)
    quality = np.asarray(quality, dtype=np.float64)
    if len(pixels) != len(quality):
        raise ValueError("seam and quality profile differ in length")
    canvas = averaged_canvas(pair)
    h, w = pair.shape
    colors = quality_colormap(quality)
    r = stroke // 2
    for i in np.argsort(np.clip(quality, 0.0, 1.0), kind="stable"):
        y, x = pixels[i]
        canvas[max(0, y - r):min(h, y + r + 1), max(0, x - r):min(w, x + r + 1)] = colors[i]
    return canvas


def write_seam_visualization(pair, seam, quality, path, stroke=3):
    pixels = getattr(seam, "pixels", seam)
    values = getattr(quality, "values", quality)
    write_image(render_seam(pair, pixels, values, stroke=stroke), path)
