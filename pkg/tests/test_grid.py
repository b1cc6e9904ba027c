import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kflow.errors import DegenerateSetError, GeometryMismatchError
from kflow.grid import (
    BoxClipWarning,
    DiscreteSet,
    GridGeometry,
    ScalarField,
    boundary_cells,
    dilate,
    set_distance,
    signed_distance,
)
from kflow.shapes import disk, half_plane

masks12 = arrays(bool, (12, 12))


def brute_sdf(mask):
    cells = np.argwhere(np.ones_like(mask))
    ins, outs = np.argwhere(mask), np.argwhere(~mask)
    out = np.empty(mask.shape)
    for p in cells:
        if mask[tuple(p)]:
            out[tuple(p)] = np.sqrt(((outs - p) ** 2).sum(1)).min() - 0.5
        else:
            out[tuple(p)] = 0.5 - np.sqrt(((ins - p) ** 2).sum(1)).min()
    return out


def test_geometry_validation():
    with pytest.raises(ValueError):
        GridGeometry((3, 8))
    g = GridGeometry((6, 6))
    bad = np.ones((6, 6), bool)
    with pytest.raises(ValueError):
        g.with_flexible(bad)


def test_set_algebra_and_mismatch():
    g = GridGeometry((6, 6))
    a = DiscreteSet(g, np.eye(6, dtype=bool))
    b = ~a
    assert (a | b).is_full and (a & b).is_empty
    assert (a - a).is_empty and a <= (a | b)
    with pytest.raises(GeometryMismatchError):
        a | DiscreteSet(GridGeometry((7, 7)), np.zeros((7, 7), bool))


def test_boundary_cell_has_half_cell_distance():
    g = GridGeometry((8, 8))
    m = np.zeros((8, 8), bool)
    m[2:6, 2:6] = True
    d = signed_distance(DiscreteSet(g, m)).values
    assert d[2, 3] == 0.5 and d[1, 3] == -0.5


def test_half_space_distance_affine():
    g = GridGeometry((10, 10))
    H = half_plane(g, (1, 0), 0.0)
    d = signed_distance(H).values
    assert np.allclose(np.diff(d, axis=0), -1.0)


@settings(max_examples=25, deadline=None)
@given(masks12)
def test_sdf_matches_bruteforce(mask):
    if mask.all() or not mask.any():
        return
    g = GridGeometry((12, 12))
    assert np.allclose(signed_distance(DiscreteSet(g, mask)).values, brute_sdf(mask), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(masks12)
def test_sdf_antisymmetry(mask):
    g = GridGeometry((12, 12))
    s = DiscreteSet(g, mask)
    assert np.array_equal(signed_distance(~s).values, -signed_distance(s).values)


def test_empty_and_full_fields():
    g = GridGeometry((5, 7))
    assert np.all(signed_distance(g.empty()).values == -g.diameter)
    assert np.all(signed_distance(g.full()).values == g.diameter)


def test_dilate_zero_and_nesting(rng):
    g = GridGeometry((20, 20))
    s = disk(g, (0, 0), 4)
    assert dilate(s, 0.0) == s
    prev = s
    for lam in [0.5, 1.0, 2.0, 3.5]:
        cur = dilate(s, lam)
        assert prev <= cur
        prev = cur


def test_dilate_disk_matches_rasterized():
    g = GridGeometry((60, 60))
    s = disk(g, (0, 0), 12)
    big = dilate(s, 3.0)
    ref = disk(g, (0, 0), 15)
    # one-cell Hausdorff error in both directions
    assert ref <= dilate(big, 1.0) and big <= dilate(ref, 1.0)


def test_dilate_composition():
    g = GridGeometry((50, 50))
    s = disk(g, (0, 0), 8)
    twice = dilate(dilate(s, 2.0), 3.0)
    once = dilate(s, 5.0)
    assert once <= twice
    assert twice <= dilate(once, 1.0)


def test_dilate_clip_warning():
    g = GridGeometry((10, 10))
    s = disk(g, (0, 0), 3)
    with pytest.warns(BoxClipWarning):
        dilate(s, 3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dilate(s, 0.5)


def test_boundary_cells_basic():
    g = GridGeometry((6, 6))
    assert len(boundary_cells(g.full())) == 20
    m = np.zeros((6, 6), bool)
    m[2, 3] = True
    assert boundary_cells(DiscreteSet(g, m)).tolist() == [[2, 3]]


@pytest.mark.parametrize("r", [10, 20, 40])
def test_boundary_count_of_disk(r):
    g = GridGeometry((2 * r + 10, 2 * r + 10))
    n = len(boundary_cells(disk(g, (0, 0), r)))
    # face-connected boundary of a digital disk has about 4 sqrt(2) r cells
    assert n == pytest.approx(4 * np.sqrt(2) * r, rel=0.05)


@pytest.mark.xfail(
    strict=True,
    reason="face-connected boundary of a digital disk has ~5.6 r cells, 10.9% below 2 pi r",
)
@pytest.mark.parametrize("r", [10, 20, 40])
def test_boundary_count_within_ten_percent_of_circumference(r):
    g = GridGeometry((2 * r + 10, 2 * r + 10))
    n = len(boundary_cells(disk(g, (0, 0), r)))
    assert n == pytest.approx(2 * np.pi * r, rel=0.10)


def test_set_distance_cases():
    g = GridGeometry((80, 80))
    a = disk(g, (-20, 0), 8)
    b = disk(g, (15, 0), 6)
    assert set_distance(a, a) == 0.0
    assert abs(set_distance(a, b) - (35 - 14)) <= 1.0 + 1e-9
    big, small = disk(g, (0, 0), 20), disk(g, (0, 0), 9)
    assert abs(set_distance(big, small) - 11) <= 1.0 + 1e-9
    with pytest.raises(DegenerateSetError):
        set_distance(a, g.empty())


def test_translate_drops_cells():
    g = GridGeometry((6, 6))
    m = np.zeros((6, 6), bool)
    m[5, 5] = m[2, 2] = True
    t = DiscreteSet(g, m).translate((1, 0))
    assert t.count == 1 and t.mask[3, 2]


def test_scalar_field_rejects_nan():
    g = GridGeometry((4, 4))
    with pytest.raises(ValueError):
        ScalarField(g, np.full((4, 4), np.nan))
