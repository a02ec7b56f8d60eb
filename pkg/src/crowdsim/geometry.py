"""Planar polygon utilities for maps, validation, and sampling.

Polygons are (n, 2) float64 arrays of vertices in meters, implicitly closed.
All predicates are exact-arithmetic-free but deterministic; callers that need
tolerances pass them explicitly.
"""

from __future__ import annotations

import math

import numpy as np


def as_polygon(points) -> np.ndarray:
    """Normalize vertex input to an (n, 2) float64 array, CCW oriented."""
    poly = np.asarray(points, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
        raise ValueError("polygon needs at least 3 (x, y) vertices")
    if not np.isfinite(poly).all():
        raise ValueError("polygon vertices must be finite")
    if signed_area(poly) < 0.0:
        poly = poly[::-1].copy()
    return poly


def signed_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_area(poly: np.ndarray) -> float:
    return abs(signed_area(poly))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    """Area centroid; falls back to the vertex mean for degenerate polygons."""
    x, y = poly[:, 0], poly[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = cross.sum() / 2.0
    if abs(a) < 1e-12:
        return poly.mean(axis=0)
    cx = float(((x + xn) * cross).sum() / (6.0 * a))
    cy = float(((y + yn) * cross).sum() / (6.0 * a))
    return np.array([cx, cy])


def polygon_bounds(poly: np.ndarray) -> tuple[float, float, float, float]:
    return (
        float(poly[:, 0].min()),
        float(poly[:, 1].min()),
        float(poly[:, 0].max()),
        float(poly[:, 1].max()),
    )


def point_in_polygon(p, poly: np.ndarray) -> bool:
    """Even-odd crossing test. Points on the boundary count as inside."""
    x, y = float(p[0]), float(p[1])
    n = poly.shape[0]
    inside = False
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if _on_segment(x, y, x1, y1, x2, y2):
            return True
        if (y1 > y) != (y2 > y):
            xin = (x2 - x1) * (y - y1) / (y2 - y1) + x1
            if x < xin:
                inside = not inside
    return inside


def _on_segment(px, py, x1, y1, x2, y2, eps=1e-12) -> bool:
    cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
    if abs(cross) > eps * max(1.0, abs(x2 - x1) + abs(y2 - y1)):
        return False
    dot = (px - x1) * (x2 - x1) + (py - y1) * (y2 - y1)
    seg2 = (x2 - x1) ** 2 + (y2 - y1) ** 2
    return -eps <= dot <= seg2 + eps


def closest_point_on_segment(p, a, b) -> np.ndarray:
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    px, py = float(p[0]), float(p[1])
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        return np.array([ax, ay])
    t = ((px - ax) * dx + (py - ay) * dy) / seg2
    t = min(1.0, max(0.0, t))
    return np.array([ax + t * dx, ay + t * dy])


def closest_point_on_polygon(p, poly: np.ndarray) -> tuple[np.ndarray, float]:
    """Nearest point on the polygon boundary and its distance."""
    best = None
    best_d2 = math.inf
    n = poly.shape[0]
    for i in range(n):
        q = closest_point_on_segment(p, poly[i], poly[(i + 1) % n])
        d2 = float((q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2)
        if d2 < best_d2:
            best_d2 = d2
            best = q
    return best, math.sqrt(best_d2)


def distance_to_polygon(p, poly: np.ndarray) -> float:
    """Signed boundary distance: positive outside, negative inside."""
    _, d = closest_point_on_polygon(p, poly)
    return -d if point_in_polygon(p, poly) else d


def segments_intersect(a1, a2, b1, b2) -> bool:
    """Proper or touching intersection of segments a1-a2 and b1-b2."""

    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        if v > 1e-12:
            return 1
        if v < -1e-12:
            return -1
        return 0

    d1 = orient(b1, b2, a1)
    d2 = orient(b1, b2, a2)
    d3 = orient(a1, a2, b1)
    d4 = orient(a1, a2, b2)
    if d1 != d2 and d3 != d4:
        return True
    if d1 == 0 and _on_segment(a1[0], a1[1], b1[0], b1[1], b2[0], b2[1]):
        return True
    if d2 == 0 and _on_segment(a2[0], a2[1], b1[0], b1[1], b2[0], b2[1]):
        return True
    if d3 == 0 and _on_segment(b1[0], b1[1], a1[0], a1[1], a2[0], a2[1]):
        return True
    if d4 == 0 and _on_segment(b2[0], b2[1], a1[0], a1[1], a2[0], a2[1]):
        return True
    return False


def is_simple_polygon(poly: np.ndarray) -> bool:
    """True when no two non-adjacent edges intersect."""
    n = poly.shape[0]
    for i in range(n):
        a1, a2 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = poly[j], poly[(j + 1) % n]
            if segments_intersect(a1, a2, b1, b2):
                return False
    return True


def _edges(poly: np.ndarray):
    n = poly.shape[0]
    for i in range(n):
        yield poly[i], poly[(i + 1) % n]


def polygons_overlap(pa: np.ndarray, pb: np.ndarray) -> bool:
    """True when the polygons share boundary or interior points."""
    for a1, a2 in _edges(pa):
        for b1, b2 in _edges(pb):
            if segments_intersect(a1, a2, b1, b2):
                return True
    return point_in_polygon(pa[0], pb) or point_in_polygon(pb[0], pa)


def polygon_contains_polygon(outer: np.ndarray, inner: np.ndarray) -> bool:
    """True when inner lies fully inside outer (boundary contact allowed)."""
    for v in inner:
        if not point_in_polygon(v, outer):
            return False
    # vertices inside is not enough for concave outers: edges must not cross
    for a1, a2 in _edges(inner):
        for b1, b2 in _edges(outer):
            if _cross_properly(a1, a2, b1, b2):
                return False
    return True


def _cross_properly(a1, a2, b1, b2) -> bool:
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        if v > 1e-12:
            return 1
        if v < -1e-12:
            return -1
        return 0

    return (
        orient(b1, b2, a1) != orient(b1, b2, a2)
        and orient(a1, a2, b1) != orient(a1, a2, b2)
        and 0 not in (orient(b1, b2, a1), orient(b1, b2, a2), orient(a1, a2, b1), orient(a1, a2, b2))
    )


def random_point_in_polygon(poly: np.ndarray, rng: np.random.Generator, max_tries: int = 1000) -> np.ndarray:
    """Uniform rejection sample inside the polygon."""
    x0, y0, x1, y1 = polygon_bounds(poly)
    for _ in range(max_tries):
        p = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
        if point_in_polygon(p, poly):
            return p
    return polygon_centroid(poly)
