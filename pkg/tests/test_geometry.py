import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kfiou.geometry import (
    Convention,
    ConvexPolygon,
    InvalidBoxError,
    RotatedBox2D,
    RotatedBox3D,
    box2d_vertices,
    canonicalize,
    convex_clip,
    polygon_area,
    rasterized_iou,
    skew_iou_2d,
    skew_iou_3d,
)

OCTAGON = 8 * (math.sqrt(2) - 1) / (8 - 8 * (math.sqrt(2) - 1))


def as_set(poly):
    return {(round(float(x), 9) + 0.0, round(float(y), 9) + 0.0) for x, y in np.asarray(poly.vertices)}


def square(cx=0.0, cy=0.0, side=1.0):
    h = side / 2
    return ConvexPolygon([(cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)])


# --------------------------------------------------------------- box types


def test_box_rejects_bad_fields():
    with pytest.raises(InvalidBoxError):
        RotatedBox2D(0, 0, 0, 1, 0)
    with pytest.raises(InvalidBoxError):
        RotatedBox2D(0, 0, 1, -1, 0)
    with pytest.raises(InvalidBoxError):
        RotatedBox2D(float("nan"), 0, 1, 1, 0)
    with pytest.raises(InvalidBoxError):
        RotatedBox3D(0, 0, 0, 1, 1, 0, 0)


def test_convention_tag_checks_range():
    RotatedBox2D(0, 0, 4, 2, -30, convention=Convention.LONG_EDGE)
    with pytest.raises(InvalidBoxError):
        RotatedBox2D(0, 0, 2, 4, 0, convention=Convention.LONG_EDGE)
    with pytest.raises(InvalidBoxError):
        RotatedBox2D(0, 0, 4, 2, 10, convention=Convention.OPENCV)


# ---------------------------------------------------------------- vertices


def test_vertices_axis_aligned():
    assert as_set(box2d_vertices(RotatedBox2D(0, 0, 2, 2, 0))) == {(1, 1), (-1, 1), (-1, -1), (1, -1)}


def test_vertices_translation():
    assert as_set(box2d_vertices(RotatedBox2D(5, 5, 2, 2, 0))) == {(6, 6), (4, 6), (4, 4), (6, 4)}


def test_vertices_45_degrees():
    r = round(math.sqrt(2), 9)
    assert as_set(box2d_vertices(RotatedBox2D(0, 0, 2, 2, 45))) == {(r, 0), (-r, 0), (0, r), (0, -r)}


def test_polygon_is_ccw_after_construction():
    cw = ConvexPolygon([(0, 0), (0, 1), (1, 1), (1, 0)])
    assert polygon_area(cw) == pytest.approx(1.0)
    v = np.asarray(cw.vertices)
    signed = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
    assert signed > 0


# ----------------------------------------------------------- clip and area


def test_clip_idempotent():
    p = box2d_vertices(RotatedBox2D(1, 2, 3, 1, 17))
    assert as_set(convex_clip(p, p)) == as_set(p)


def test_clip_half_overlap():
    out = convex_clip(square(), square(0.5, 0.0))
    assert polygon_area(out) == pytest.approx(0.5, abs=1e-12)
    assert as_set(out) == {(0, -0.5), (0.5, -0.5), (0.5, 0.5), (0, 0.5)}


def test_clip_disjoint_is_empty():
    out = convex_clip(square(), square(5, 5))
    assert out.is_empty
    assert polygon_area(out) == 0.0


def test_clip_with_container_returns_subject():
    small = box2d_vertices(RotatedBox2D(0, 0, 1, 0.5, 30))
    assert as_set(convex_clip(small, square(side=10))) == as_set(small)


def test_areas():
    assert polygon_area(square()) == pytest.approx(1.0)
    assert polygon_area(ConvexPolygon([])) == 0.0
    assert polygon_area(ConvexPolygon([(0, 0), (2, 0), (0, 2)])) == pytest.approx(2.0)


# -------------------------------------------------------------------- IoU


@pytest.mark.parametrize(
    "b1, b2, want",
    [
        ((0, 0, 2, 2, 0), (1, 0, 2, 2, 0), 1 / 3),
        ((0, 0, 4, 2, 0), (0, 0, 4, 2, 90), 1 / 3),
        ((0, 0, 2, 2, 0), (0, 0, 2, 2, 45), OCTAGON),
    ],
)
def test_skew_iou_2d_examples(b1, b2, want):
    assert skew_iou_2d(RotatedBox2D(*b1), RotatedBox2D(*b2)) == pytest.approx(want, abs=1e-9)


def test_octagon_value():
    assert OCTAGON == pytest.approx(0.707107, abs=1e-6)


def test_skew_iou_3d_examples():
    a = RotatedBox3D(0, 0, 0, 4, 2, 2, 0)
    assert skew_iou_3d(a, a) == pytest.approx(1.0)
    stacked = RotatedBox3D(0, 0, 1, 4, 2, 2, 0)
    assert skew_iou_3d(a, stacked) == pytest.approx(1 / 3)
    cross = RotatedBox3D(0, 0, 0, 4, 2, 2, 90)
    assert skew_iou_3d(a, cross) == pytest.approx(1 / 3)


def test_skew_iou_3d_disjoint_in_z():
    a = RotatedBox3D(0, 0, 0, 4, 2, 2, 0)
    assert skew_iou_3d(a, RotatedBox3D(0, 0, 5, 4, 2, 2, 0)) == 0.0


def test_raster_examples():
    a = RotatedBox2D(0, 0, 2, 2, 0)
    assert rasterized_iou(a, a, 200) == pytest.approx(1.0)
    assert rasterized_iou(a, RotatedBox2D(10, 10, 2, 2, 0), 200) == 0.0
    assert abs(rasterized_iou(a, RotatedBox2D(0, 0, 2, 2, 45), 2000) - OCTAGON) <= 5e-3


def test_raster_rejects_coarse_grid():
    a = RotatedBox2D(0, 0, 2, 2, 0)
    with pytest.raises(ValueError):
        rasterized_iou(a, a, 10)


def test_near_collinear_edges_stay_stable():
    # shared edges and touching corners hit the inclusive epsilon path
    a = RotatedBox2D(0, 0, 2, 2, 0)
    assert skew_iou_2d(a, RotatedBox2D(2, 0, 2, 2, 0)) == 0.0
    assert skew_iou_2d(a, RotatedBox2D(1, 0, 2, 2, 1e-12)) == pytest.approx(1 / 3, abs=1e-9)
    assert skew_iou_2d(a, RotatedBox2D(0, 0, 2, 2, 90)) == pytest.approx(1.0, abs=1e-9)


# ----------------------------------------------------------- canonicalize


def test_canonicalize_long_edge():
    box = RotatedBox2D(0, 0, 2, 4, -30)
    c = canonicalize(box, Convention.LONG_EDGE)
    assert (c.w, c.h) == (4, 2)
    assert c.theta == pytest.approx(60.0)
    assert skew_iou_2d(box, c) == pytest.approx(1.0, abs=1e-9)


def test_canonicalize_opencv_range():
    c = canonicalize(RotatedBox2D(0, 0, 4, 2, 30), Convention.OPENCV)
    assert -90.0 <= c.theta < 0.0


def test_canonicalize_already_canonical():
    box = RotatedBox2D(1, 2, 4, 2, -10)
    c = canonicalize(box, Convention.LONG_EDGE)
    assert c.as_tuple() == pytest.approx(box.as_tuple())


def test_canonicalize_square_preserves_point_set():
    box = RotatedBox2D(0, 0, 3, 3, 120)
    c = canonicalize(box, Convention.LONG_EDGE)
    assert skew_iou_2d(box, c) == pytest.approx(1.0, abs=1e-9)


# ------------------------------------------------------------- properties

coord = st.floats(-50, 50)
extent = st.floats(0.5, 60)
angle = st.floats(-180, 180)
boxes = st.builds(RotatedBox2D, coord, coord, extent, extent, angle)


@settings(max_examples=200, deadline=None)
@given(boxes, boxes)
def test_symmetry(a, b):
    assert skew_iou_2d(a, b) == pytest.approx(skew_iou_2d(b, a), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(boxes)
def test_self_iou_is_one(a):
    assert skew_iou_2d(a, a) == pytest.approx(1.0, abs=1e-9)


def _rigid(box, phi, tx, ty):
    c, s = math.cos(math.radians(phi)), math.sin(math.radians(phi))
    return RotatedBox2D(c * box.x - s * box.y + tx, s * box.x + c * box.y + ty, box.w, box.h, box.theta + phi)


@settings(max_examples=200, deadline=None)
@given(boxes, boxes, angle, coord, coord)
def test_rigid_motion_invariance(a, b, phi, tx, ty):
    assert skew_iou_2d(_rigid(a, phi, tx, ty), _rigid(b, phi, tx, ty)) == pytest.approx(skew_iou_2d(a, b), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(boxes, boxes, st.floats(0.1, 10))
def test_scale_invariance(a, b, s):
    def sc(x):
        return RotatedBox2D(x.x * s, x.y * s, x.w * s, x.h * s, x.theta)

    assert skew_iou_2d(sc(a), sc(b)) == pytest.approx(skew_iou_2d(a, b), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(boxes, boxes, st.sampled_from(list(Convention)))
def test_parameterization_invariance(a, b, conv):
    assert skew_iou_2d(canonicalize(a, conv), b) == pytest.approx(skew_iou_2d(a, b), abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(boxes, st.sampled_from(list(Convention)))
def test_canonicalize_lands_in_range(a, conv):
    c = canonicalize(a, conv)
    if conv is Convention.OPENCV:
        assert -90.0 <= c.theta < 0.0
    else:
        assert -90.0 <= c.theta < 90.0 and c.w >= c.h


@settings(max_examples=200, deadline=None)
@given(boxes, boxes)
def test_clip_area_bounded(a, b):
    pa, pb = box2d_vertices(a), box2d_vertices(b)
    out = convex_clip(pa, pb)
    assert polygon_area(out) <= min(polygon_area(pa), polygon_area(pb)) + 1e-9
    assert out.is_empty or out.is_convex


boxes3 = st.builds(RotatedBox3D, coord, coord, coord, extent, extent, extent, angle)


@settings(max_examples=100, deadline=None)
@given(boxes3, boxes3)
def test_symmetry_3d(a, b):
    assert skew_iou_3d(a, b) == pytest.approx(skew_iou_3d(b, a), abs=1e-9)
    assert 0.0 <= skew_iou_3d(a, b) <= 1.0 + 1e-12


def test_nearly_coincident_edges_regression():
    a = RotatedBox2D(1e-09, 0.0, 0.5, 0.5, 0.0)
    b = RotatedBox2D(0.0, 0.0, 0.5, 1.0, 0.0)
    c = canonicalize(a, Convention.OPENCV)
    clipped = convex_clip(box2d_vertices(c), box2d_vertices(b))
    assert np.abs(np.asarray(clipped.vertices)).max() <= 0.5
    assert skew_iou_2d(c, b) == pytest.approx(skew_iou_2d(a, b), abs=1e-9)


tiny = st.sampled_from([0.0, 1e-12, -1e-12, 5e-10, -5e-10, 1e-9, -1e-9, 2e-9, -2e-9, 1e-8])
quarter = st.sampled_from([0.0, 90.0, -90.0, 180.0])


@settings(max_examples=300, deadline=None)
@given(st.floats(0.5, 20), st.floats(0.5, 20), tiny, tiny, quarter, quarter, st.sampled_from(list(Convention)))
def test_near_degenerate_alignment(w, h, dx, dy, t1, t2, conv):
    a = RotatedBox2D(dx, dy, w, h, t1)
    b = RotatedBox2D(0.0, 0.0, w, h * 2, t2)
    iou = skew_iou_2d(a, b)
    assert 0.0 <= iou <= 1.0
    assert iou == pytest.approx(skew_iou_2d(b, a), abs=1e-9)
    assert iou == pytest.approx(skew_iou_2d(canonicalize(a, conv), b), abs=1e-9)
