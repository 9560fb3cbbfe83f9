"""Per-element and whole-mesh quality metrics for quadrilateral meshes.

Every per-element metric is a ratio or an angle, so all of them are invariant
under rigid motions and uniform scaling.  Aggregates use the population
standard deviation: a report describes the full element set, not a sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .geometry import as_points, interior_angles


def _quad(points) -> np.ndarray:
    q = as_points(points)
    if q.shape != (4, 2):
        raise ValueError(f"expected 4 corners, got shape {q.shape}")
    return q


def _edges_and_diagonals(q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    edges = np.linalg.norm(np.roll(q, -1, axis=0) - q, axis=1)
    diags = np.array([
        np.linalg.norm(q[2] - q[0]),
        np.linalg.norm(q[3] - q[1]),
    ])
    return edges, diags


def element_quality(quad) -> float:
    """Combined edge/angle quality of one quad, in [0, 1]; 1 is a square.

    Geometric mean of an edge term (sqrt(2) * shortest edge / longest
    diagonal) and an angle term (smallest interior angle / largest).
    """
    q = _quad(quad)
    edges, diags = _edges_and_diagonals(q)
    d_max = float(np.max(diags))
    if d_max == 0.0:
        raise ValueError("quad has zero-length diagonals")
    q_edge = math.sqrt(2.0) * float(np.min(edges)) / d_max
    angles = interior_angles(q)
    q_angle = float(np.min(angles) / np.max(angles))
    return math.sqrt(q_edge * q_angle)


def scaled_jacobian(quad) -> float:
    """Minimum corner cross product normalized by the two edge lengths.

    +1 when every corner is a right angle (convex CCW winding); negative at
    reflex corners or for flipped elements.  Range [-1, 1].
    """
    q = _quad(quad)
    nxt = np.roll(q, -1, axis=0) - q
    prv = np.roll(q, 1, axis=0) - q
    ln = np.linalg.norm(nxt, axis=1)
    lp = np.linalg.norm(prv, axis=1)
    if np.any(ln == 0.0) or np.any(lp == 0.0):
        raise ValueError("quad has a zero-length edge")
    cross = nxt[:, 0] * prv[:, 1] - nxt[:, 1] * prv[:, 0]
    return float(np.min(cross / (ln * lp)))


def stretch(quad) -> float:
    """sqrt(2) * shortest edge / longest diagonal, in (0, 1]."""
    q = _quad(quad)
    edges, diags = _edges_and_diagonals(q)
    d_max = float(np.max(diags))
    if d_max == 0.0:
        raise ValueError("quad has zero-length diagonals")
    return math.sqrt(2.0) * float(np.min(edges)) / d_max


def _tri_area(a, b, c) -> float:
    return 0.5 * abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def taper(quad) -> float:
    """Worst-case area imbalance of the two triangles on either diagonal.

    0 for any parallelogram (diagonals bisect the area), approaching 1 as one
    triangle vanishes.  A degenerate zero-area triangle gives 1 by convention.
    """
    q = _quad(quad)
    worst = 0.0
    for tri1, tri2 in (((0, 1, 2), (0, 2, 3)), ((1, 2, 3), (1, 3, 0))):
        a1 = _tri_area(q[tri1[0]], q[tri1[1]], q[tri1[2]])
        a2 = _tri_area(q[tri2[0]], q[tri2[1]], q[tri2[2]])
        hi = max(a1, a2)
        if hi == 0.0:
            return 1.0
        lo = min(a1, a2)
        if lo == 0.0:
            return 1.0
        worst = max(worst, 1.0 - lo / hi)
    return worst


def angle_deviations(quad) -> Tuple[float, float]:
    """(|min interior angle - 90|, |max interior angle - 90|) in degrees."""
    q = _quad(quad)
    angles = np.degrees(interior_angles(q))
    return abs(float(np.min(angles)) - 90.0), abs(float(np.max(angles)) - 90.0)


@dataclass
class Mesh:
    """Vertex/face soup: quads from this generator, triangles only when read
    from external files."""

    vertices: np.ndarray
    quads: List[Tuple[int, int, int, int]] = field(default_factory=list)
    triangles: List[Tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.vertices = as_points(self.vertices) if len(self.vertices) else np.zeros((0, 2))
        for face in list(self.quads) + list(self.triangles):
            for idx in face:
                if not (0 <= idx < len(self.vertices)):
                    raise ValueError(f"face index {idx} out of range")

    def quad_corners(self, k: int) -> np.ndarray:
        return self.vertices[list(self.quads[k])]

    def n_elements(self) -> int:
        return len(self.quads) + len(self.triangles)


def _face_edges(face: Sequence[int]):
    m = len(face)
    for i in range(m):
        a, b = face[i], face[(i + 1) % m]
        yield (a, b) if a < b else (b, a)


def singularity_count(mesh: Mesh) -> int:
    """Number of interior vertices whose incident edge count differs from 4.

    Interior means not lying on any boundary edge, where a boundary edge is
    one used by exactly one face.
    """
    edge_use: Dict[Tuple[int, int], int] = {}
    valence: Dict[int, set] = {}
    for face in list(mesh.quads) + list(mesh.triangles):
        for a, b in _face_edges(face):
            edge_use[(a, b)] = edge_use.get((a, b), 0) + 1
            valence.setdefault(a, set()).add(b)
            valence.setdefault(b, set()).add(a)
    on_boundary = set()
    for (a, b), uses in edge_use.items():
        if uses == 1:
            on_boundary.add(a)
            on_boundary.add(b)
    count = 0
    for v, nbrs in valence.items():
        if v not in on_boundary and len(nbrs) != 4:
            count += 1
    return count


@dataclass
class QualityReport:
    singularity: int
    element_quality: Tuple[float, float]
    min_angle_dev: Tuple[float, float]
    max_angle_dev: Tuple[float, float]
    scaled_jacobian: Tuple[float, float]
    stretch: Tuple[float, float]
    taper: Tuple[float, float]
    triangle_count: int
    quad_count: int

    def as_kv_lines(self) -> List[str]:
        lines = [
            f"singularity={self.singularity}",
            f"triangle_count={self.triangle_count}",
            f"quad_count={self.quad_count}",
        ]
        for name in ("element_quality", "min_angle_dev", "max_angle_dev",
                     "scaled_jacobian", "stretch", "taper"):
            mean, std = getattr(self, name)
            lines.append(f"{name}_mean={mean!r}")
            lines.append(f"{name}_std={std!r}")
        return lines

    def as_table(self) -> str:
        rows = [
            ("Singularity", f"{self.singularity}"),
            ("Element quality", _pm(self.element_quality)),
            ("|MinAngle - 90|", _pm(self.min_angle_dev)),
            ("|MaxAngle - 90|", _pm(self.max_angle_dev)),
            ("Scaled Jacobian", _pm(self.scaled_jacobian)),
            ("Stretch", _pm(self.stretch)),
            ("Taper", _pm(self.taper)),
            ("#Triangles", f"{self.triangle_count}"),
            ("#Quads", f"{self.quad_count}"),
        ]
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value}" for name, value in rows)


def _pm(pair: Tuple[float, float]) -> str:
    return f"{pair[0]:.4f} +/- {pair[1]:.4f}"


def _mean_std(values: List[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())  # population std


def report(mesh: Mesh) -> QualityReport:
    """Aggregate the per-element metrics over a whole mesh."""
    if mesh.n_elements() == 0:
        raise ValueError("empty mesh")
    eq, min_dev, max_dev, sj, st, tp = [], [], [], [], [], []
    for k in range(len(mesh.quads)):
        q = mesh.quad_corners(k)
        eq.append(element_quality(q))
        lo, hi = angle_deviations(q)
        min_dev.append(lo)
        max_dev.append(hi)
        sj.append(scaled_jacobian(q))
        st.append(stretch(q))
        tp.append(taper(q))
    if not mesh.quads:
        zero = (0.0, 0.0)
        return QualityReport(singularity_count(mesh), zero, zero, zero, zero, zero, zero,
                             len(mesh.triangles), 0)
    return QualityReport(
        singularity=singularity_count(mesh),
        element_quality=_mean_std(eq),
        min_angle_dev=_mean_std(min_dev),
        max_angle_dev=_mean_std(max_dev),
        scaled_jacobian=_mean_std(sj),
        stretch=_mean_std(st),
        taper=_mean_std(tp),
        triangle_count=len(mesh.triangles),
        quad_count=len(mesh.quads),
    )
