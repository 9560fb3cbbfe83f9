"""Parameterized test and training domains.

All generators return clockwise simple loops with an even vertex count, which
is what all-quad extraction needs (each cut preserves vertex-count parity and
completion requires reaching exactly four).
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .geometry import Boundary

GENERATOR_KINDS = ("star", "l-shape", "multi-notch", "ring-bridged", "polygon-file")


def _cw(points: np.ndarray) -> Boundary:
    return Boundary(points, allow_reverse=True)


def regular_polygon(n: int = 20, radius: float = 1.0, center=(0.0, 0.0)) -> Boundary:
    """Convex n-gon (n must be even to be meshable)."""
    if n < 4:
        raise ValueError("need at least 4 vertices")
    t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    pts = np.column_stack([center[0] + radius * np.cos(-t), center[1] + radius * np.sin(-t)])
    return _cw(pts)


def star(points: int = 8, outer_radius: float = 1.0, inner_radius: float = 0.45,
         seed: Optional[int] = None, jitter: float = 0.0) -> Boundary:
    """2*points-gon alternating outer tips (sharp) and inner valleys."""
    if points < 3:
        raise ValueError("a star needs at least 3 points")
    if not 0.0 < inner_radius <= outer_radius:
        raise ValueError("need 0 < inner_radius <= outer_radius")
    n = 2 * points
    t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    radii = np.where(np.arange(n) % 2 == 0, outer_radius, inner_radius)
    if jitter > 0.0:
        rng = np.random.default_rng(seed)
        radii = radii * (1.0 + jitter * rng.uniform(-1.0, 1.0, n))
    pts = np.column_stack([radii * np.cos(-t), radii * np.sin(-t)])
    return _cw(pts)


def l_shape(width: float = 2.0, height: float = 2.0, notch_w: float = 1.0,
            notch_h: float = 1.0) -> Boundary:
    """Six-vertex L with one reflex corner."""
    if not (0.0 < notch_w < width and 0.0 < notch_h < height):
        raise ValueError("notch must be smaller than the outline")
    pts = np.array([
        (0.0, 0.0),
        (0.0, height),
        (width - notch_w, height),
        (width - notch_w, height - notch_h),
        (width, height - notch_h),
        (width, 0.0),
    ])
    return _cw(pts)


def multi_notch(base_vertices: int = 16, notches: int = 2, depth: float = 0.5,
                variation: float = 0.2, radius: float = 2.0,
                seed: Optional[int] = 0) -> Boundary:
    """Jittered convex blob with rectangular bites cut into spread-out edges.

    Bites create bottlenecks and reflex corners; the radial jitter makes the
    segment lengths uneven.  Each bite adds four vertices, so parity is
    preserved.
    """
    if base_vertices < 8 or base_vertices % 2:
        raise ValueError("base_vertices must be even and at least 8")
    if notches < 0 or not 0.0 < depth < 0.45 * radius * 2:
        raise ValueError("bad notch parameters")
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 2.0 * math.pi, base_vertices, endpoint=False)
    radii = radius * (1.0 + variation * rng.uniform(-1.0, 1.0, base_vertices))
    pts = [np.array([r * math.cos(-a), r * math.sin(-a)]) for r, a in zip(radii, t)]

    if notches:
        stride = max(1, base_vertices // notches)
        targets = [(k * stride) % base_vertices for k in range(notches)]
        out = []
        for i, p in enumerate(pts):
            out.append(p)
            if i in targets:
                q = pts[(i + 1) % base_vertices]
                d = q - p
                length = float(np.linalg.norm(d))
                inward = np.array([d[1], -d[0]]) / length
                a1 = p + 0.3 * d
                b1 = p + 0.7 * d
                out.append(a1)
                out.append(a1 + depth * inward)
                out.append(b1 + depth * inward)
                out.append(b1)
        pts = out
    return _cw(np.array(pts))


def ring_bridged(outer_radius: float = 1.0, inner_radius: float = 0.5,
                 n_outer: int = 20, n_inner: int = 12, gap: float = 0.2) -> Boundary:
    """Annulus with the hole pre-bridged by a slit, walked as one loop."""
    if not 0.0 < inner_radius < outer_radius:
        raise ValueError("need 0 < inner_radius < outer_radius")
    if (n_outer + n_inner) % 2:
        n_inner += 1
    if gap <= 0.0 or gap >= inner_radius:
        raise ValueError("gap must lie in (0, inner_radius)")
    half_o = math.asin(0.5 * gap / outer_radius)
    half_i = math.asin(0.5 * gap / inner_radius)
    t_out = np.linspace(half_o, 2.0 * math.pi - half_o, n_outer)
    t_in = np.linspace(2.0 * math.pi - half_i, half_i, n_inner)
    outer = np.column_stack([outer_radius * np.cos(t_out), outer_radius * np.sin(t_out)])
    inner = np.column_stack([inner_radius * np.cos(t_in), inner_radius * np.sin(t_in)])
    return _cw(np.vstack([outer, inner]))  # CCW walk, flipped by _cw


def training_domain() -> Boundary:
    """Default training fixture: one bottleneck neck, a sharp wedge tip, and
    unevenly spaced segments on a 16-vertex outline."""
    pts = np.array([
        (0.0, -2.0), (1.2, -1.6), (1.9, -0.9), (2.0, -0.5),
        (3.0, -0.55), (4.4, -0.5), (5.2, 0.0), (4.4, 0.5),
        (3.0, 0.55), (2.0, 0.5), (1.9, 0.9), (1.2, 1.6),
        (0.0, 2.0), (-1.4, 1.4), (-2.0, 0.0), (-1.4, -1.4),
    ])
    return _cw(pts)


def generate(kind: str, **kwargs) -> Boundary:
    """Dispatch by generator kind name (CLI entry point)."""
    if kind == "star":
        return star(**kwargs)
    if kind == "l-shape":
        return l_shape(**kwargs)
    if kind == "multi-notch":
        return multi_notch(**kwargs)
    if kind == "ring-bridged":
        return ring_bridged(**kwargs)
    if kind == "training":
        return training_domain()
    if kind == "regular":
        return regular_polygon(**kwargs)
    raise ValueError(f"unknown domain kind '{kind}'")
