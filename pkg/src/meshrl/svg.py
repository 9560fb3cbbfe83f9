"""Deterministic SVG rendering of boundaries and meshes.

Fixed 800x800 viewport with a margin, fixed float formatting, no timestamps:
the same input always produces byte-identical output.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .geometry import Boundary
from .quality import Mesh

VIEW = 800.0
MARGIN = 24.0

QUAD_FILL = "#cfe0f1"
QUAD_STROKE = "#35506b"
TRI_FILL = "#f4d8a8"
BOUNDARY_STROKE = "#c0392b"


def _fit(points: np.ndarray):
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-12))
    scale = (VIEW - 2.0 * MARGIN) / span

    def to_px(p):
        x = MARGIN + (p[0] - lo[0]) * scale
        y = VIEW - MARGIN - (p[1] - lo[1]) * scale  # flip: SVG y grows downward
        return x, y

    return to_px


def _fmt(value: float) -> str:
    return f"{value:.3f}"


def _face_path(points, to_px) -> str:
    cmds = []
    for i, p in enumerate(points):
        x, y = to_px(p)
        cmds.append(f"{'M' if i == 0 else 'L'}{_fmt(x)},{_fmt(y)}")
    return "".join(cmds) + "Z"


def render_svg(mesh: Optional[Mesh] = None, boundary: Optional[Boundary] = None) -> str:
    """SVG document with one path per face plus an optional boundary outline."""
    clouds = []
    if mesh is not None and len(mesh.vertices):
        clouds.append(mesh.vertices)
    if boundary is not None:
        clouds.append(boundary.vertices)
    if not clouds:
        raise ValueError("nothing to render")
    to_px = _fit(np.vstack(clouds))

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{int(VIEW)}" '
        f'height="{int(VIEW)}" viewBox="0 0 {int(VIEW)} {int(VIEW)}">',
    ]
    if mesh is not None:
        for face in mesh.quads:
            d = _face_path(mesh.vertices[list(face)], to_px)
            lines.append(f'<path d="{d}" fill="{QUAD_FILL}" stroke="{QUAD_STROKE}" '
                         f'stroke-width="1"/>')
        for face in mesh.triangles:
            d = _face_path(mesh.vertices[list(face)], to_px)
            lines.append(f'<path d="{d}" fill="{TRI_FILL}" stroke="{QUAD_STROKE}" '
                         f'stroke-width="1"/>')
    if boundary is not None:
        d = _face_path(boundary.vertices, to_px)
        lines.append(f'<path d="{d}" fill="none" stroke="{BOUNDARY_STROKE}" '
                     f'stroke-width="2"/>')
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def save_svg(path, mesh: Optional[Mesh] = None, boundary: Optional[Boundary] = None) -> None:
    from .io import atomic_write_text

    atomic_write_text(path, render_svg(mesh=mesh, boundary=boundary))
