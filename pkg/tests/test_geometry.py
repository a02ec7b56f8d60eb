import numpy as np
import pytest
from shapely.geometry import Polygon as ShapelyPolygon

from crowdsim import geometry


def square(x0, y0, size):
    return geometry.as_polygon(
        [(x0, y0), (x0 + size, y0), (x0 + size, y0 + size), (x0, y0 + size)])


def test_as_polygon_orients_ccw():
    cw = [(0, 0), (0, 1), (1, 1), (1, 0)]
    poly = geometry.as_polygon(cw)
    assert geometry.signed_area(poly) > 0


def test_as_polygon_rejects_degenerate():
    with pytest.raises(ValueError):
        geometry.as_polygon([(0, 0), (1, 1)])
    with pytest.raises(ValueError):
        geometry.as_polygon([(0, 0), (1, float("nan")), (1, 1)])


def test_area_and_centroid():
    poly = square(0, 0, 4)
    assert geometry.polygon_area(poly) == pytest.approx(16.0)
    assert geometry.polygon_centroid(poly) == pytest.approx([2.0, 2.0])


def test_point_in_polygon_basic():
    poly = square(0, 0, 2)
    assert geometry.point_in_polygon((1, 1), poly)
    assert not geometry.point_in_polygon((3, 1), poly)
    # boundary counts as inside
    assert geometry.point_in_polygon((0, 1), poly)
    assert geometry.point_in_polygon((2, 2), poly)


def test_point_in_concave_polygon():
    # U shape: inside notch is outside the polygon
    poly = geometry.as_polygon(
        [(0, 0), (6, 0), (6, 5), (4, 5), (4, 2), (2, 2), (2, 5), (0, 5)])
    assert geometry.point_in_polygon((1, 4), poly)
    assert geometry.point_in_polygon((5, 4), poly)
    assert not geometry.point_in_polygon((3, 4), poly)
    assert geometry.point_in_polygon((3, 1), poly)


def test_closest_point_on_polygon():
    poly = square(0, 0, 2)
    q, d = geometry.closest_point_on_polygon((3.0, 1.0), poly)
    assert q == pytest.approx([2.0, 1.0])
    assert d == pytest.approx(1.0)
    q, d = geometry.closest_point_on_polygon((1.0, 1.0), poly)
    assert d == pytest.approx(1.0)


def test_distance_to_polygon_sign():
    poly = square(0, 0, 2)
    assert geometry.distance_to_polygon((1.0, 1.0), poly) == pytest.approx(-1.0)
    assert geometry.distance_to_polygon((4.0, 1.0), poly) == pytest.approx(2.0)


def test_segments_intersect():
    assert geometry.segments_intersect((0, 0), (2, 2), (0, 2), (2, 0))
    assert not geometry.segments_intersect((0, 0), (1, 0), (0, 1), (1, 1))
    # touching endpoint counts
    assert geometry.segments_intersect((0, 0), (1, 1), (1, 1), (2, 0))


def test_is_simple_polygon():
    assert geometry.is_simple_polygon(square(0, 0, 1))
    bowtie = np.array([(0.0, 0.0), (2.0, 2.0), (2.0, 0.0), (0.0, 2.0)])
    assert not geometry.is_simple_polygon(bowtie)


def test_overlap_and_containment_against_shapely():
    rng = np.random.default_rng(7)
    for _ in range(60):
        a = square(rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(1, 3))
        b = square(rng.uniform(0, 6), rng.uniform(0, 6), rng.uniform(1, 3))
        sa, sb = ShapelyPolygon(a), ShapelyPolygon(b)
        assert geometry.polygons_overlap(a, b) == sa.intersects(sb)
        assert geometry.polygon_contains_polygon(a, b) == sa.covers(sb)


def test_contains_rejects_concave_crossing():
    outer = geometry.as_polygon(
        [(0, 0), (6, 0), (6, 5), (4, 5), (4, 2), (2, 2), (2, 5), (0, 5)])
    # box spanning the notch: all 4 vertices inside, edges cross the notch
    inner = square(1, 3, 4)
    assert not geometry.polygon_contains_polygon(outer, inner)
    assert geometry.polygon_contains_polygon(outer, square(0.5, 0.5, 1.0))


def test_random_point_in_polygon_inside():
    rng = np.random.default_rng(3)
    poly = geometry.as_polygon([(0, 0), (5, 0), (5, 1), (1, 1), (1, 4), (0, 4)])
    for _ in range(50):
        p = geometry.random_point_in_polygon(poly, rng)
        assert geometry.point_in_polygon(p, poly)
