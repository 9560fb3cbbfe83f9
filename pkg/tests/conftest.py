"""Shared fixtures and independent oracle implementations.

The oracles here deliberately re-derive results through different arithmetic
than the library (winding angles instead of crossing parity, per-vertex loops
instead of vectorized rolls) so that agreement is meaningful.
"""

from __future__ import annotations

import math

import numpy as np
import pytest


# -- independent oracles -------------------------------------------------------


def oracle_point_in_polygon(p, vertices) -> bool:
    """Winding-number test: sums signed turn angles around p."""
    total = 0.0
    n = len(vertices)
    for i in range(n):
        a = np.asarray(vertices[i], dtype=float) - p
        b = np.asarray(vertices[(i + 1) % n], dtype=float) - p
        total += math.atan2(a[0] * b[1] - a[1] * b[0], a[0] * b[0] + a[1] * b[1])
    return abs(total) > math.pi  # ~2*pi inside, ~0 outside


def oracle_interior_angle_deg(vertices, i) -> float:
    """Interior angle via atan2 on the two edge directions, degrees."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    u = v[(i - 1) % n] - v[i]
    w = v[(i + 1) % n] - v[i]
    ang = math.atan2(u[0] * w[1] - u[1] * w[0], u[0] * w[0] + u[1] * w[1])
    ang = ang % (2.0 * math.pi)
    # interior for the clockwise storage convention used across the suite
    return math.degrees(ang)


def oracle_averaged_angle_deg(vertices, i, n_rv) -> float:
    """Average of the interior-side angles spanned by the j-th neighbors."""
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    total = 0.0
    for j in range(1, n_rv + 1):
        u = v[(i - j) % n] - v[i]
        w = v[(i + j) % n] - v[i]
        ang = math.atan2(u[0] * w[1] - u[1] * w[0], u[0] * w[0] + u[1] * w[1])
        total += ang % (2.0 * math.pi)
    return math.degrees(total / n_rv)


def oracle_reference_vertex(vertices, n_rv) -> int:
    vals = [oracle_averaged_angle_deg(vertices, i, n_rv) for i in range(len(vertices))]
    lo = min(vals)
    for i, a in enumerate(vals):
        if a <= lo + 1e-7:
            return i
    raise AssertionError


def random_similarity(rng):
    """Random rotation + uniform scale + translation as an affine pair (A, t)."""
    theta = rng.uniform(0.0, 2.0 * math.pi)
    s = rng.uniform(0.3, 3.0)
    c, sn = math.cos(theta), math.sin(theta)
    a_mat = s * np.array([[c, -sn], [sn, c]])
    t = rng.uniform(-5.0, 5.0, 2)
    return a_mat, t


def random_star_polygon(rng, n_min=8, n_max=40):
    """Random simple clockwise polygon with an even vertex count (radial graph
    around the centroid, so simplicity is guaranteed)."""
    n = int(rng.integers(n_min // 2, n_max // 2 + 1)) * 2
    angles = np.sort(rng.uniform(0.0, 2.0 * math.pi, n))
    if np.min(np.diff(angles, append=angles[0] + 2.0 * math.pi)) < 1e-3:
        angles = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    radii = rng.uniform(0.5, 2.0, n)
    pts = np.column_stack([radii * np.cos(angles), radii * np.sin(angles)])
    return pts[::-1].copy()  # clockwise


# -- common fixtures -----------------------------------------------------------


@pytest.fixture
def unit_square_cw():
    return np.array([(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)])


@pytest.fixture
def unit_square_ccw():
    return np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])


@pytest.fixture
def l_shape_cw():
    # 2x2 outline with a 1x1 notch: exactly one 270 degree reflex at (1, 1)
    return np.array([(0.0, 0.0), (0.0, 2.0), (1.0, 2.0), (1.0, 1.0),
                     (2.0, 1.0), (2.0, 0.0)])


@pytest.fixture
def grid_mesh_3x3():
    """3x3 structured grid of unit squares (16 vertices, 9 quads, CCW faces)."""
    from meshrl.quality import Mesh

    verts = [(x, y) for y in range(4) for x in range(4)]
    quads = []
    for y in range(3):
        for x in range(3):
            a = y * 4 + x
            quads.append((a, a + 1, a + 5, a + 4))
    return Mesh(vertices=np.array(verts, dtype=float), quads=quads)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training checks")
