#!/usr/bin/env python3
"""
Tests for cone membership, boundary distance, boxes and thickened cones
"""
import math

import numpy as np
import pytest

from core.exceptions import ArgumentError, DimensionMismatchError, UnsupportedConeError
from scripts.geometry.cone_geometry import (Box, HalfLine, HalfSpace, LinearImage, Orthant, Wedge2D,
                                            box_in_region, box_meets_cone, box_slack,
                                            ensure_unit_interior, shift_param, thicken)


def test_open_cone_membership():
    assert HalfLine().contains(0.5)
    assert not HalfLine().contains(0.0)
    assert Orthant(2).contains([1.0, 2.0])
    assert not Orthant(2).contains([1.0, 0.0])
    assert HalfSpace(3).contains([-5.0, 7.0, 0.1])
    assert not HalfSpace(3).contains([1.0, 1.0, -0.1])


def test_vectorized_membership_keeps_shape():
    pts = np.array([[1.0, 1.0], [-1.0, 1.0], [2.0, 3.0]])
    assert Orthant(2).contains(pts).tolist() == [True, False, True]


def test_boundary_distance_orthant():
    assert Orthant(2).boundary_distance([3.0, 1.0]) == pytest.approx(1.0)
    assert Orthant(2).boundary_distance([-1.0, 4.0]) == 0.0


def test_reflex_wedge_contains_and_distance():
    wedge = Wedge2D(3 * math.pi / 2)
    assert wedge.normals() is None
    assert wedge.contains([-1.0, -1.0])
    assert not wedge.contains([1.0, -1.0])
    # nearest boundary ray of the three-quarter plane is the positive x-axis
    assert wedge.boundary_distance([1.0, 2.0]) == pytest.approx(2.0)


def test_linear_image_maps_points():
    T = np.array([[2.0, 0.0], [0.0, 0.5]])
    image = LinearImage(T, Orthant(2))
    assert image.contains([2.0, 0.5])
    assert not image.contains([-2.0, 0.5])


def test_linear_image_rejects_singular_map():
    with pytest.raises(ArgumentError):
        LinearImage(np.array([[1.0, 2.0], [2.0, 4.0]]), Orthant(2))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        Orthant(3).contains([1.0, 1.0])


def test_box_half_open():
    closed = Box((0.0, 0.0), (1.0, 1.0))
    half_open = Box.from_corner([0.0, 0.0], 1.0, closed=False)
    assert closed.contains([1.0, 1.0])
    assert not half_open.contains([1.0, 0.5])
    assert half_open.contains([0.0, 0.0])
    assert closed.volume == pytest.approx(1.0)
    assert len(closed.corners()) == 4


def test_box_rejects_inverted_corners():
    with pytest.raises(ArgumentError):
        Box((1.0,), (0.0,))


def test_shift_param_orthant_equals_delta():
    assert shift_param(Orthant(2), 0.3) == pytest.approx(0.3)
    assert shift_param(Orthant(4), 1.5) == pytest.approx(1.5)
    assert box_slack(Orthant(3)) == pytest.approx(1.0)


def test_shift_param_bounds_for_convex_wedge():
    wedge = Wedge2D(math.pi / 3, math.pi / 4 - math.pi / 6)
    delta = 0.2
    t = shift_param(wedge, delta)
    assert delta / 2 <= t <= delta / box_slack(wedge) + 1e-12


def test_shift_param_reflex_wedge_bisection():
    wedge, _ = ensure_unit_interior(Wedge2D(3 * math.pi / 2))
    delta = 0.1
    t = shift_param(wedge, delta, n_boxes=2000, seed=3)
    assert delta / 2 - 1e-9 <= t <= delta / box_slack(wedge) + 1e-9


def test_shift_param_rejects_nonpositive_delta():
    with pytest.raises(ArgumentError):
        shift_param(Orthant(2), 0.0)


def test_thickened_cones_nest():
    inner = thicken(Orthant(2), 0.3, "+")
    outer = thicken(Orthant(2), 0.3, "-")
    assert inner.contains([0.4, 0.4])
    assert not inner.contains([0.2, 5.0])
    assert outer.contains([-0.2, 5.0])
    assert not Orthant(2).contains([-0.2, 5.0])


def test_box_meeting_cone_lies_in_outer_thickening():
    delta = 0.5
    outer = thicken(Orthant(2), delta, "-")
    box = Box.from_corner([-0.4, 2.0], delta)
    assert box_meets_cone(Orthant(2), box)
    assert box_in_region(outer, box)
    assert not box_in_region(Orthant(2), box)


def test_box_missing_cone():
    assert not box_meets_cone(Orthant(2), Box.from_corner([-2.0, -2.0], 1.0))


def test_ensure_unit_interior_rotates_wedge():
    wedge = Wedge2D(math.pi / 2, math.pi)
    assert not wedge.contains([1.0, 1.0])
    rotated, rotation = ensure_unit_interior(wedge)
    assert rotated.contains([1.0, 1.0])
    assert np.allclose(rotation @ rotation.T, np.eye(2))


def test_ensure_unit_interior_keeps_admissible_cone():
    cone, rotation = ensure_unit_interior(Orthant(3))
    assert cone == Orthant(3)
    assert np.allclose(rotation, np.eye(3))


def test_halfspace_in_high_dimension_has_no_planar_rays():
    assert HalfSpace(3).planar_rays() is None
    with pytest.raises(UnsupportedConeError):
        HalfSpace(3).planar_normals()
