"""Synthetic aligned pairs with a known local misalignment.

The canvas holds one smooth random texture.  The target covers the left part,
the reference the right part, and inside the overlap a block of the reference
is replaced by the texture displaced horizontally, so the overlap is
misaligned only there.  The block spans the overlap's full width, so every
seam has to cross it.
"""
import os
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .imaging import Rect, make_pair, write_image


@dataclass(frozen=True)
class ShiftFixture:
    pair: object
    block: Rect
    shift: int
    seed: int


def smooth_texture(height, width, rng, sigma=3.0, channels=3):
    """Gaussian-smoothed uniform noise stretched to [0.1, 0.9] per channel."""
    noise = rng.random((height, width, channels))
    out = np.stack([gaussian_filter(noise[..., c], sigma, mode="reflect") for c in range(channels)], axis=-1)
    lo = out.min(axis=(0, 1), keepdims=True)
    hi = out.max(axis=(0, 1), keepdims=True)
    return 0.1 + 0.8 * (out - lo) / np.maximum(hi - lo, 1e-12)


def shifted_block_pair(seed=0, width=400, height=300, overlap=(170, 230), block_rows=(120, 180),
                       shift=5, sigma=3.0):
    """Pair whose reference block ``block_rows`` x ``overlap`` is displaced by ``shift`` px.

    ``reference[y, x] = base[y, x - shift]`` inside the block, so the target
    sampled at ``x - shift`` lines up with it (flow ``(-shift, 0)``).
    """
    x0, x1 = overlap
    y0, y1 = block_rows
    if not (0 < x0 < x1 < width and 0 <= y0 < y1 <= height):
        raise ValueError("overlap and block must lie inside the canvas")
    rng = np.random.default_rng(seed)
    pad = abs(shift)
    base = smooth_texture(height, width + 2 * pad, rng, sigma)
    core = base[:, pad:pad + width]
    reference = core.copy()
    reference[y0:y1, x0:x1] = base[y0:y1, pad + x0 - shift:pad + x1 - shift]
    cols = np.arange(width)
    target_mask = np.broadcast_to(cols < x1, (height, width))
    reference_mask = np.broadcast_to(cols >= x0, (height, width))
    pair = make_pair(core, reference, target_mask, reference_mask)
    return ShiftFixture(pair=pair, block=Rect(x0, y0, x1, y1), shift=shift, seed=seed)


def write_pair(pair, directory, stem="pair"):
    """Save a pair as two RGBA PNGs; returns (target_path, reference_path)."""
    os.makedirs(directory, exist_ok=True)
    t = os.path.join(directory, f"{stem}_target.png")
    r = os.path.join(directory, f"{stem}_reference.png")
    write_image(pair.target, t, alpha=pair.target_mask)
    write_image(pair.reference, r, alpha=pair.reference_mask)
    return t, r
