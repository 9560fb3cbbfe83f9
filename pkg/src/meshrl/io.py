"""File formats: boundary JSON, mesh text, atomic writes.

Boundary files are ``{"vertices": [[x, y], ...], "orientation": "cw"}``.
Mesh files are line oriented: ``v x y`` vertices, ``q i1 i2 i3 i4`` quads and
``t i1 i2 i3`` triangles with one-based indices; this generator never emits
triangle lines but the reader accepts them for external meshes.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from .geometry import Boundary, as_points, polygon_is_simple, signed_area
from .quality import Mesh

PathLike = Union[str, os.PathLike]


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a torn file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def check_boundary_array(X) -> np.ndarray:
    """Validate an (n, 2) vertex array as a usable meshing boundary and
    normalize it to clockwise orientation."""
    v = as_points(X)
    if len(v) < 4:
        raise ValueError(f"boundary needs at least 4 vertices, got {len(v)}")
    if signed_area(v) > 0.0:
        v = v[::-1].copy()
    if not polygon_is_simple(v):
        raise ValueError("boundary is not a simple polygon")
    return v


def boundary_to_json(boundary) -> str:
    v = boundary.vertices if isinstance(boundary, Boundary) else check_boundary_array(boundary)
    payload = {"vertices": [[float(x), float(y)] for x, y in v], "orientation": "cw"}
    return json.dumps(payload, indent=1) + "\n"


def save_boundary_json(path: PathLike, boundary) -> None:
    atomic_write_text(path, boundary_to_json(boundary))


def load_boundary_json(path: PathLike) -> Boundary:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(payload, dict) or "vertices" not in payload:
        raise ValueError(f"{path}: missing 'vertices'")
    orientation = payload.get("orientation", "cw")
    if orientation not in ("cw", "ccw"):
        raise ValueError(f"{path}: orientation must be 'cw' or 'ccw'")
    verts = as_points(payload["vertices"])
    if orientation == "ccw":
        verts = verts[::-1]
    return Boundary(verts, allow_reverse=True)


def mesh_to_text(mesh: Mesh) -> str:
    lines: List[str] = []
    for x, y in mesh.vertices:
        lines.append(f"v {x!r} {y!r}")
    for face in mesh.quads:
        lines.append("q " + " ".join(str(i + 1) for i in face))
    for face in mesh.triangles:
        lines.append("t " + " ".join(str(i + 1) for i in face))
    return "\n".join(lines) + "\n"


def save_mesh_text(path: PathLike, mesh: Mesh) -> None:
    atomic_write_text(path, mesh_to_text(mesh))


def load_mesh_text(path: PathLike) -> Mesh:
    vertices: List[Tuple[float, float]] = []
    quads: List[Tuple[int, int, int, int]] = []
    triangles: List[Tuple[int, int, int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            kind, args = parts[0], parts[1:]
            try:
                if kind == "v" and len(args) == 2:
                    vertices.append((float(args[0]), float(args[1])))
                elif kind == "q" and len(args) == 4:
                    quads.append(tuple(int(a) - 1 for a in args))
                elif kind == "t" and len(args) == 3:
                    triangles.append(tuple(int(a) - 1 for a in args))
                else:
                    raise ValueError(f"unrecognized record '{line}'")
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    if not vertices:
        raise ValueError(f"{path}: no vertices")
    n = len(vertices)
    for lineno_hint, faces in (("q", quads), ("t", triangles)):
        for face in faces:
            if any(not 0 <= i < n for i in face):
                raise ValueError(f"{path}: face index out of range in '{lineno_hint}' record")
    return Mesh(vertices=np.array(vertices), quads=quads, triangles=triangles)
