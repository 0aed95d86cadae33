import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seamweld.errors import ConstraintConflictError, EmptySeamError, UnanchoredCutError
from seamweld.imaging import make_pair
from seamweld.mincut import HARD, OUTSIDE, energy_of, solve_mincut
from seamweld.seam import (boundary_anchors, build_energy, composite, effective_labels, estimate_seam,
                           euclidean_smoothness, extract_seam_path)


def strip_pair(rng, h=6, w=10, overlap=(3, 7), target=None, reference=None):
    """Target valid left of overlap[1], reference valid from overlap[0]."""
    cols = np.arange(w)
    mt = np.broadcast_to(cols < overlap[1], (h, w))
    mr = np.broadcast_to(cols >= overlap[0], (h, w))
    t = rng.random((h, w, 3)) if target is None else target
    r = rng.random((h, w, 3)) if reference is None else reference
    return make_pair(t, r, mt, mr)


def naive_boundary(labels):
    h, w = labels.shape
    out = set()
    for y in range(h):
        for x in range(w):
            if labels[y, x] != 0:
                continue
            for dy, dx in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and labels[yy, xx] == 1:
                    out.add((y, x))
    return out


def test_smoothness_formula_example():
    t = np.zeros((1, 2, 3))
    r = np.zeros((1, 2, 3))
    r[0, 0] = 1.0
    right, down = euclidean_smoothness(t, r)
    assert right[0, 0] == pytest.approx(np.sqrt(3.0), abs=1e-15)
    assert down.shape == (0, 2)


@given(st.integers(0, 2**31 - 1))
def test_smoothness_symmetric_and_zero_iff_agree(seed):
    rng = np.random.default_rng(seed)
    t = rng.random((4, 5, 3))
    r = t.copy()
    r[rng.random((4, 5)) < 0.3] += 0.1
    right, down = euclidean_smoothness(t, r)
    # swapping the images leaves the cost unchanged
    r2, d2 = euclidean_smoothness(r, t)
    assert np.allclose(right, r2) and np.allclose(down, d2)
    agree = np.all(t == r, axis=2)
    assert np.array_equal(right == 0, agree[:, :-1] & agree[:, 1:])
    assert np.array_equal(down == 0, agree[:-1, :] & agree[1:, :])


def test_anchors_follow_single_image_adjacency(rng):
    pair = strip_pair(rng)
    anchors, clash = boundary_anchors(pair.target_mask, pair.reference_mask)
    assert not clash.any()
    assert np.all(anchors[:, 3] == 0) and np.all(anchors[:, 6] == 1)
    assert np.all(anchors[:, 4:6] == -1)


def test_estimate_seam_on_strip_is_top_to_bottom(rng):
    pair = strip_pair(rng)
    labels, seam = estimate_seam(pair)
    assert np.all(labels[:, 3] == 0) and np.all(labels[:, 6] == 1)
    rows = {int(y) for y, _ in seam.pixels}
    assert rows == set(range(6))
    assert np.all(pair.overlap[seam.pixels[:, 0], seam.pixels[:, 1]])


def test_identical_images_give_zero_cost(rng):
    img = rng.random((6, 10, 3))
    pair = strip_pair(rng, target=img, reference=img)
    cut = solve_mincut(build_energy(pair))
    assert cut.cut_cost == 0.0


def _anchored_brute_force(pair, graph):
    overlap = pair.overlap
    nodes = list(zip(*np.nonzero(overlap)))
    best = np.inf
    lab = np.full(overlap.shape, OUTSIDE)
    for bits in itertools.product((0, 1), repeat=len(nodes)):
        for (y, x), b in zip(nodes, bits):
            lab[y, x] = b
        e = energy_of(graph, lab)
        if e < HARD:
            best = min(best, e)
    return best


def test_bright_column_avoided_matches_enumeration():
    # 5x5 canvas with a 3-wide overlap holding 12 free pixels; the middle
    # overlap column disagrees strongly, so cutting across it is expensive
    h, w = 4, 5
    t = np.full((h, w, 3), 0.5)
    r = np.full((h, w, 3), 0.5)
    r[:, 2] = 1.0
    cols = np.arange(w)
    pair = make_pair(t, r, np.broadcast_to(cols < 4, (h, w)), np.broadcast_to(cols >= 1, (h, w)))
    graph = build_energy(pair)
    cut = solve_mincut(graph)
    assert cut.cut_cost == pytest.approx(_anchored_brute_force(pair, graph), abs=1e-12)
    assert np.all(cut.labels[:, 2] == cut.labels[:, 1]) or np.all(cut.labels[:, 2] == cut.labels[:, 3])


@given(st.integers(0, 2**31 - 1))
def test_estimate_seam_is_anchored_optimum(seed):
    rng = np.random.default_rng(seed)
    h = int(rng.integers(1, 5))
    pair = strip_pair(rng, h=h, w=5, overlap=(1, 4))  # 3 overlap columns
    graph = build_energy(pair)
    cut = solve_mincut(graph)
    assert cut.cut_cost == pytest.approx(_anchored_brute_force(pair, graph), rel=1e-12)


def test_unanchored_and_conflicting_inputs(rng):
    img = rng.random((4, 4, 3))
    with pytest.raises(UnanchoredCutError):
        build_energy(make_pair(img, img))
    # a 1-pixel-wide overlap touches both single-image regions
    cols = np.arange(5)
    pair = make_pair(img[:, :1].repeat(5, 1), img[:, :1].repeat(5, 1),
                     np.broadcast_to(cols <= 2, (4, 5)), np.broadcast_to(cols >= 2, (4, 5)))
    with pytest.raises(ConstraintConflictError):
        build_energy(pair)
    pair = strip_pair(rng)
    cons = np.full(pair.shape, -1)
    cons[0, 3] = 1  # contradicts the 0-anchor there
    with pytest.raises(ConstraintConflictError):
        build_energy(pair, cons)


def test_caller_constraints_anchor_a_full_overlap(rng):
    img = rng.random((4, 6, 3))
    pair = make_pair(img, rng.random((4, 6, 3)))
    cons = np.full((4, 6), -1)
    cons[:, 0] = 0
    cons[:, -1] = 1
    cut = solve_mincut(build_energy(pair, cons))
    assert np.all(cut.labels[:, 0] == 0) and np.all(cut.labels[:, -1] == 1)


def test_extract_seam_simple_column():
    labels = np.zeros((4, 4), np.int8)
    labels[:, 2:] = 1
    seam = extract_seam_path(labels)
    assert seam.pixels.tolist() == [[0, 1], [1, 1], [2, 1], [3, 1]]
    assert seam.normals.tolist() == [0, 0, 0, 0]
    assert not seam.multi_chain


def test_extract_seam_empty():
    with pytest.raises(EmptySeamError):
        extract_seam_path(np.zeros((3, 3), np.int8))


@given(st.integers(0, 2**31 - 1))
def test_seam_is_exactly_the_boundary_set(seed):
    rng = np.random.default_rng(seed)
    h, w = rng.integers(3, 12, 2)
    # random two-region mask: label 1 right of a random monotone-ish staircase
    cut = np.clip(np.cumsum(rng.integers(-1, 2, h)) + w // 2, 1, w - 1)
    labels = (np.arange(w)[None, :] >= cut[:, None]).astype(np.int8)
    seam = extract_seam_path(labels)
    got = [tuple(p) for p in seam.pixels.tolist()]
    assert len(got) == len(set(got))
    assert set(got) == naive_boundary(labels)
    # within a chain consecutive pixels are 8-neighbours
    for a, b in seam.chains:
        for i in range(a, b - 1):
            assert np.abs(seam.pixels[i + 1] - seam.pixels[i]).max() == 1
    for p, k in zip(seam.pixels, seam.normals):
        dy, dx = ((0, 1), (1, 0), (0, -1), (-1, 0))[k]
        assert labels[p[0] + dy, p[1] + dx] == 1


def test_disconnected_boundaries_are_separate_chains():
    labels = np.zeros((7, 7), np.int8)
    labels[1, 1] = 1
    labels[5, 5] = 1
    seam = extract_seam_path(labels)
    assert seam.multi_chain and len(seam.chains) == 2
    assert seam.chain_id().tolist() == [0] * 4 + [1] * 4


def test_composite_selects_per_pixel(rng):
    pair = strip_pair(rng)
    labels = np.where(pair.overlap, rng.integers(0, 2, pair.shape), OUTSIDE)
    out, coverage = composite(pair, labels)
    assert coverage.all()
    h, w = pair.shape
    for y in range(h):
        for x in range(w):
            if pair.target_mask[y, x] and (not pair.reference_mask[y, x] or labels[y, x] == 0):
                assert np.array_equal(out[y, x], pair.target[y, x])
            else:
                assert np.array_equal(out[y, x], pair.reference[y, x])


def test_composite_leaves_uncovered_black(rng):
    img = rng.random((3, 4, 3))
    mt = np.zeros((3, 4), bool)
    mt[:, :2] = True
    mr = np.zeros((3, 4), bool)
    mr[:, 1:3] = True
    pair = make_pair(img, img, mt, mr)
    out, cov = composite(pair, np.where(pair.overlap, 0, OUTSIDE))
    assert not cov[:, 3].any() and np.all(out[:, 3] == 0)
    eff = effective_labels(pair, np.where(pair.overlap, 1, OUTSIDE))
    assert eff[:, 0].tolist() == [0] * 3 and eff[:, 2].tolist() == [1] * 3 and eff[:, 3].tolist() == [-1] * 3
