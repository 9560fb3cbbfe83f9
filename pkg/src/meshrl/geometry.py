"""2D geometric kernel for advancing-front quad extraction.

Boundaries are stored as closed clockwise loops.  With that orientation the
domain interior lies in the counterclockwise sweep from a vertex's previous
neighbor to its next neighbor, which is the convention every angle helper
here relies on.  All predicates use floating point with a small tolerance;
inputs are continuous learned actions, not adversarial degeneracies.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

# Absolute tolerance for orientation-style predicates, applied in coordinates
# normalized by the local length scale.
EPS = 1e-9

TWO_PI = 2.0 * math.pi


def as_points(points) -> np.ndarray:
    """Coerce a point sequence to a float64 (n, 2) array, rejecting non-finite input."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected (n, 2) point array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points contain NaN or Inf")
    return arr


def signed_area(points) -> float:
    """Shoelace area of a closed polygon: negative for clockwise winding."""
    v = as_points(points)
    if len(v) < 3:
        raise ValueError("signed_area needs at least 3 vertices")
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_perimeter(points) -> float:
    v = as_points(points)
    return float(np.sum(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)))


def edge_lengths(points) -> np.ndarray:
    """Lengths of edges (v[i], v[i+1]) around the closed loop."""
    v = as_points(points)
    return np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)


def ccw_angle(origin, start, end) -> float:
    """Counterclockwise rotation in [0, 2*pi) taking direction origin->start to origin->end."""
    origin = np.asarray(origin, dtype=np.float64)
    u = np.asarray(start, dtype=np.float64) - origin
    v = np.asarray(end, dtype=np.float64) - origin
    if not (np.any(u) and np.any(v)):
        raise ValueError("ccw_angle with zero-length direction")
    ang = math.atan2(u[0] * v[1] - u[1] * v[0], u[0] * v[0] + u[1] * v[1])
    return ang % TWO_PI


def _ccw_angles_vec(origin: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    u = start - origin
    v = end - origin
    ang = np.arctan2(u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0],
                     u[:, 0] * v[:, 0] + u[:, 1] * v[:, 1])
    return np.mod(ang, TWO_PI)


def interior_angles(points) -> np.ndarray:
    """Interior angles (radians, in (0, 2*pi)) of a simple polygon at every vertex.

    Works for either winding: the orientation is read off the signed area.
    Raises on coincident neighboring vertices.
    """
    v = as_points(points)
    if len(v) < 3:
        raise ValueError("interior_angles needs at least 3 vertices")
    prv = np.roll(v, 1, axis=0)
    nxt = np.roll(v, -1, axis=0)
    if np.any(np.all(np.isclose(v, nxt, rtol=0.0, atol=0.0), axis=1)):
        raise ValueError("repeated consecutive vertices")
    if signed_area(v) <= 0.0:  # clockwise: interior swept CCW from prev to next
        return _ccw_angles_vec(v, prv, nxt)
    return _ccw_angles_vec(v, nxt, prv)


def interior_angle(points, i: int) -> float:
    """Interior angle at vertex i, in degrees."""
    v = as_points(points)
    return math.degrees(float(interior_angles(v)[i % len(v)]))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def segments_intersect(a1, a2, b1, b2, eps: float = EPS) -> bool:
    """True iff the closed segments a1-a2 and b1-b2 share at least one point.

    Shared endpoints count as intersections; callers that walk a polygon
    exclude adjacent edges by index, not here.
    """
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    b1 = np.asarray(b1, dtype=np.float64)
    b2 = np.asarray(b2, dtype=np.float64)
    scale = max(
        abs(a2[0] - a1[0]) + abs(a2[1] - a1[1]),
        abs(b2[0] - b1[0]) + abs(b2[1] - b1[1]),
        1e-300,
    )
    tol = eps * scale * scale
    d1 = _orient(b1, b2, a1)
    d2 = _orient(b1, b2, a2)
    d3 = _orient(a1, a2, b1)
    d4 = _orient(a1, a2, b2)
    if ((d1 > tol and d2 < -tol) or (d1 < -tol and d2 > tol)) and (
        (d3 > tol and d4 < -tol) or (d3 < -tol and d4 > tol)
    ):
        return True

    def on_segment(p, q, r) -> bool:
        # r collinear with p-q already established; box test with tolerance
        t = eps * scale
        return (min(p[0], q[0]) - t <= r[0] <= max(p[0], q[0]) + t
                and min(p[1], q[1]) - t <= r[1] <= max(p[1], q[1]) + t)

    if abs(d1) <= tol and on_segment(b1, b2, a1):
        return True
    if abs(d2) <= tol and on_segment(b1, b2, a2):
        return True
    if abs(d3) <= tol and on_segment(a1, a2, b1):
        return True
    if abs(d4) <= tol and on_segment(a1, a2, b2):
        return True
    return False


def segment_intersects_any(p, q, starts: np.ndarray, ends: np.ndarray,
                           skip: Optional[np.ndarray] = None,
                           eps: float = EPS) -> bool:
    """Vectorized test of one segment p-q against many segments.

    ``skip`` is a boolean mask of segments to ignore (e.g. edges sharing a
    vertex with p-q).  Endpoint contact counts as an intersection.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if len(starts) == 0:
        return False
    span = abs(q[0] - p[0]) + abs(q[1] - p[1])
    spans = np.abs(ends[:, 0] - starts[:, 0]) + np.abs(ends[:, 1] - starts[:, 1])
    scale = np.maximum(np.maximum(span, spans), 1e-300)
    tol = eps * scale * scale

    def orient_many(a, b, c):
        return (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])

    pm = np.broadcast_to(p, starts.shape)
    qm = np.broadcast_to(q, starts.shape)
    d1 = orient_many(starts, ends, pm)
    d2 = orient_many(starts, ends, qm)
    d3 = orient_many(pm, qm, starts)
    d4 = orient_many(pm, qm, ends)

    proper = (((d1 > tol) & (d2 < -tol)) | ((d1 < -tol) & (d2 > tol))) & (
        ((d3 > tol) & (d4 < -tol)) | ((d3 < -tol) & (d4 > tol))
    )

    t = eps * scale

    def on_many(a, b, c):
        return ((np.minimum(a[:, 0], b[:, 0]) - t <= c[:, 0])
                & (c[:, 0] <= np.maximum(a[:, 0], b[:, 0]) + t)
                & (np.minimum(a[:, 1], b[:, 1]) - t <= c[:, 1])
                & (c[:, 1] <= np.maximum(a[:, 1], b[:, 1]) + t))

    touching = (((np.abs(d1) <= tol) & on_many(starts, ends, pm))
                | ((np.abs(d2) <= tol) & on_many(starts, ends, qm))
                | ((np.abs(d3) <= tol) & on_many(pm, qm, starts))
                | ((np.abs(d4) <= tol) & on_many(pm, qm, ends)))

    hit = proper | touching
    if skip is not None:
        hit = hit & ~skip
    return bool(np.any(hit))


def point_segment_distance(p, s1, s2) -> float:
    """Euclidean distance from p to the closed segment s1-s2."""
    p = np.asarray(p, dtype=np.float64)
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    d = s2 - s1
    dd = float(d @ d)
    if dd == 0.0:
        return float(np.linalg.norm(p - s1))
    t = float((p - s1) @ d) / dd
    t = min(1.0, max(0.0, t))
    return float(np.linalg.norm(p - (s1 + t * d)))


def point_segments_distance(p, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Distances from p to each closed segment, vectorized."""
    p = np.asarray(p, dtype=np.float64)
    d = ends - starts
    dd = np.einsum("ij,ij->i", d, d)
    dd_safe = np.where(dd == 0.0, 1.0, dd)
    t = np.einsum("ij,ij->i", p - starts, d) / dd_safe
    t = np.clip(np.where(dd == 0.0, 0.0, t), 0.0, 1.0)
    proj = starts + t[:, None] * d
    return np.linalg.norm(p - proj, axis=1)


def point_in_polygon(p, points, eps: float = EPS) -> bool:
    """Strict interior test by crossing parity; points on the boundary are outside."""
    v = as_points(points)
    p = np.asarray(p, dtype=np.float64)
    starts = v
    ends = np.roll(v, -1, axis=0)
    scale = max(float(np.max(np.abs(v))), 1.0)
    if float(np.min(point_segments_distance(p, starts, ends))) <= eps * scale:
        return False
    x, y = p
    x1, y1 = starts[:, 0], starts[:, 1]
    x2, y2 = ends[:, 0], ends[:, 1]
    straddle = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xs = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    crossings = int(np.count_nonzero(straddle & (xs > x)))
    return crossings % 2 == 1


def polygon_is_simple(points, eps: float = EPS) -> bool:
    """Brute-force simplicity check: no repeated neighbors, no zero angles,
    no intersection between non-adjacent edges.  Quadratic; fine for
    validation and tests, not for the stepping hot path."""
    v = as_points(points)
    n = len(v)
    if n < 3:
        return False
    nxt = np.roll(v, -1, axis=0)
    if np.any(np.linalg.norm(nxt - v, axis=1) == 0.0):
        return False
    try:
        angles = interior_angles(v)
    except ValueError:
        return False
    if np.any(angles < 1e-12) or np.any(angles > TWO_PI - 1e-12):
        return False
    for i in range(n):
        a1, a2 = v[i], v[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # shared vertex with edge i
            if segments_intersect(a1, a2, v[j], v[(j + 1) % n], eps=eps):
                return False
    return True


def polar_normalize(points, origin, ref_point, scale: float) -> np.ndarray:
    """Map points into the scale-free local frame at ``origin``.

    Returns an (n, 2) array of (radius, angle): radius is the distance from
    origin divided by ``scale``; angle is the signed rotation in (-pi, pi]
    from the direction origin->ref_point, counterclockwise positive.  For a
    clockwise boundary with ref_point the previous neighbor, positive angles
    are the interior side.  The output is invariant under any similarity
    transform applied jointly to all arguments.
    """
    pts = as_points(points)
    origin = np.asarray(origin, dtype=np.float64)
    ref = np.asarray(ref_point, dtype=np.float64)
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    rd = ref - origin
    if not np.any(rd):
        raise ValueError("ref_point coincides with origin")
    rel = pts - origin
    radii = np.linalg.norm(rel, axis=1) / scale
    ref_angle = math.atan2(rd[1], rd[0])
    ang = np.arctan2(rel[:, 1], rel[:, 0]) - ref_angle
    ang = np.where(radii == 0.0, 0.0, ang)
    ang = np.mod(ang + math.pi, TWO_PI) - math.pi
    return np.column_stack([radii, ang])


class Boundary:
    """Closed simple clockwise loop of 2D vertices: the evolving meshing front.

    Counterclockwise input is rejected unless ``allow_reverse`` is set, in
    which case it is flipped on construction.  ``validate=False`` skips the
    quadratic simplicity check for internally produced updates that are
    simple by construction.
    """

    __slots__ = ("vertices", "_perimeter")

    def __init__(self, vertices, *, allow_reverse: bool = False, validate: bool = True,
                 min_vertices: int = 4):
        v = as_points(vertices).copy()
        if len(v) < min_vertices:
            raise ValueError(f"boundary needs at least {min_vertices} vertices, got {len(v)}")
        area = signed_area(v)
        if area == 0.0:
            raise ValueError("degenerate boundary with zero area")
        if area > 0.0:
            if not allow_reverse:
                raise ValueError("boundary is counterclockwise; pass allow_reverse=True to flip")
            v = v[::-1].copy()
        if validate and not polygon_is_simple(v):
            raise ValueError("boundary is not a simple polygon")
        self.vertices = v
        self._perimeter: Optional[float] = None

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def perimeter(self) -> float:
        if self._perimeter is None:
            self._perimeter = polygon_perimeter(self.vertices)
        return self._perimeter

    def area(self) -> float:
        """Unsigned enclosed area."""
        return abs(signed_area(self.vertices))

    def interior_angles(self) -> np.ndarray:
        return interior_angles(self.vertices)

    def copy(self) -> "Boundary":
        return Boundary(self.vertices, validate=False, min_vertices=3)


def quad_is_valid(quad, boundary_vertices, used_indices: Sequence[Optional[int]],
                  eps: float = EPS) -> bool:
    """Verdict on whether a candidate element can be cut from the front.

    ``quad`` is 4 corners in counterclockwise winding; ``used_indices`` gives,
    per corner, the boundary index it sits on (None for newly created
    vertices).  Valid means: corners distinct, simple, positive area, strictly
    convex, new edges stay inside the domain and cross no boundary edge except
    at shared vertices, and new corners lie strictly inside the domain.
    """
    q = as_points(quad)
    if q.shape != (4, 2):
        return False
    b = as_points(boundary_vertices)
    n = len(b)
    scale = max(float(np.max(edge_lengths(q))), 1e-300)

    # distinct corners
    for i in range(4):
        for j in range(i + 1, 4):
            if np.linalg.norm(q[i] - q[j]) <= eps * scale:
                return False
    # simple: opposite edges must not cross
    if segments_intersect(q[0], q[1], q[2], q[3], eps=eps):
        return False
    if segments_intersect(q[1], q[2], q[3], q[0], eps=eps):
        return False
    if signed_area(q) <= 0.0:
        return False
    angles = interior_angles(q)
    if np.any(angles <= eps) or np.any(angles >= math.pi - eps):
        return False

    starts = b
    ends = np.roll(b, -1, axis=0)

    def boundary_adjacent(i: int, j: int) -> bool:
        return (i + 1) % n == j or (j + 1) % n == i

    for c in range(4):
        c2 = (c + 1) % 4
        i, j = used_indices[c], used_indices[c2]
        if i is not None and j is not None and boundary_adjacent(i, j):
            continue  # this quad edge lies on the front
        # new edge: exclude boundary edges incident to its on-boundary endpoints
        skip = np.zeros(n, dtype=bool)
        for k in (i, j):
            if k is not None:
                skip[k % n] = True
                skip[(k - 1) % n] = True
        if segment_intersects_any(q[c], q[c2], starts, ends, skip=skip, eps=eps):
            return False
        mid = 0.5 * (q[c] + q[c2])
        if not point_in_polygon(mid, b, eps=eps):
            return False

    for c in range(4):
        if used_indices[c] is None and not point_in_polygon(q[c], b, eps=eps):
            return False
    return True
