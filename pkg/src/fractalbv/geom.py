"""Small planar-geometry helpers used by the cell machinery.

All polygons are convex and given as (k, 2) float arrays.  These run on
cold paths (threshold computation, validation); the hot distance tests
live in :mod:`fractalbv.kernels`.
"""

from __future__ import annotations

import numpy as np


def order_ccw(points: np.ndarray) -> np.ndarray:
    """Return the points sorted counterclockwise around their centroid."""
    pts = np.asarray(points, dtype=float)
    c = pts.mean(axis=0)
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    return pts[np.argsort(ang, kind="stable")]


def point_segment_dist(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean distance from point p to segment [a, b]."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = float((p - a) @ ab) / denom
    t = min(1.0, max(0.0, t))
    q = a + t * ab
    return float(np.hypot(*(p - q)))


def point_in_convex(p: np.ndarray, poly: np.ndarray, tol: float = 0.0) -> bool:
    """True if p lies inside the ccw-ordered convex polygon (boundary counts)."""
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        if cross < -tol:
            return False
    return True


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if v == 0 else (1 if v > 0 else -1)

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    # collinear overlap handled conservatively by the caller's vertex tests
    return False


def convex_polygon_dist(pa: np.ndarray, pb: np.ndarray) -> float:
    """Minimum distance between two ccw convex polygons (0 if they meet).

    Valid as a lower bound on the distance between any two sets contained
    in the polygons.
    """
    na, nb = len(pa), len(pb)
    # overlap / containment
    if any(point_in_convex(p, pb) for p in pa) or any(point_in_convex(p, pa) for p in pb):
        return 0.0
    for i in range(na):
        for j in range(nb):
            if _segments_intersect(pa[i], pa[(i + 1) % na], pb[j], pb[(j + 1) % nb]):
                return 0.0
    best = np.inf
    for i in range(na):
        a1, a2 = pa[i], pa[(i + 1) % na]
        for j in range(nb):
            b1, b2 = pb[j], pb[(j + 1) % nb]
            best = min(
                best,
                point_segment_dist(a1, b1, b2),
                point_segment_dist(a2, b1, b2),
                point_segment_dist(b1, a1, a2),
                point_segment_dist(b2, a1, a2),
            )
    return float(best)


def point_polygon_dist(p: np.ndarray, poly: np.ndarray) -> float:
    """Distance from a point to a ccw convex polygon (0 inside)."""
    if point_in_convex(p, poly):
        return 0.0
    n = len(poly)
    return float(min(point_segment_dist(p, poly[i], poly[(i + 1) % n]) for i in range(n)))


def is_orthogonal(mat: np.ndarray, tol: float = 1e-12) -> bool:
    """Check R·Rᵀ = I entrywise within tol."""
    return bool(np.max(np.abs(mat @ mat.T - np.eye(2))) <= tol)
