"""Element-extraction environment: the MDP the meshing policy is trained in.

The front is a clockwise simple loop.  Each step picks the reference vertex
(smallest averaged surrounding angle), exposes a scale-free local observation
of the nearby front, decodes the agent's action into a candidate quad, cuts it
off when valid, and scores the cut.  Extraction continues until the remaining
front is itself a quad, which is emitted as the last element.

Index conventions for a clockwise loop: the first right neighbor of vertex i
is vertex i-1 and the first left neighbor is vertex i+1.  Rotating
counterclockwise from the direction (i -> i-1) sweeps the domain interior,
which makes interior-side angles positive in the local polar frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .geometry import (
    Boundary,
    ccw_angle,
    edge_lengths,
    interior_angles,
    point_segments_distance,
    polar_normalize,
    quad_is_valid,
    signed_area,
)
from .quality import Mesh, element_quality

OUTCOME_VALID = "valid"
OUTCOME_INVALID = "invalid"
OUTCOME_COMPLETED = "completed"
OUTCOME_FAILED = "failed"

INVALID_REWARD = -0.1
COMPLETION_REWARD = 10.0


@dataclass
class EnvConfig:
    """Environment knobs.

    n_rv: surrounding vertex pairs averaged when ranking reference vertices.
    n: neighbor vertices observed per side; also the edge window of the base
        length (one shared parameter).
    g: fan-shaped probe slices of the interior angle at the reference vertex.
    radius_alpha: action radius = radius_alpha * base length.
    fan_beta: probe reach = fan_beta * base length.
    kappa, upsilon: density shaping; upsilon < 1 densifies, > 1 coarsens.
    m_angle: junction angles below this many degrees are penalized.
    max_steps: episode cap; defaults to 20x the initial vertex count.
    """

    n_rv: int = 2
    n: int = 2
    g: int = 3
    radius_alpha: float = 2.0
    fan_beta: float = 6.0
    kappa: float = 4.0
    upsilon: float = 1.0
    m_angle: float = 60.0
    max_steps: Optional[int] = None
    max_consecutive_invalid: int = 50

    def __post_init__(self):
        if self.n_rv < 1 or self.n < 1 or self.g < 1:
            raise ValueError("n_rv, n and g must be at least 1")
        if self.radius_alpha <= 0 or self.fan_beta <= 0 or self.kappa <= 0:
            raise ValueError("radius_alpha, fan_beta and kappa must be positive")
        if not (0.0 < self.upsilon <= 10.0):
            raise ValueError("upsilon must lie in (0, 10]")
        if self.m_angle <= 0:
            raise ValueError("m_angle must be positive")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be positive when given")
        if self.max_consecutive_invalid < 1:
            raise ValueError("max_consecutive_invalid must be positive")

    @property
    def observation_size(self) -> int:
        return 2 * (2 * self.n + self.g) + 1


@dataclass
class MeshAction:
    """Raw policy output plus its decoded meaning."""

    raw: np.ndarray
    rule_type: int
    radius_frac: float = 0.0
    angle_frac: float = 0.0
    vertex: Optional[np.ndarray] = None


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    outcome: str
    element: Optional[np.ndarray] = None
    # True only when the episode ended by hitting the step cap; the learner
    # bootstraps through such ends but not through real terminals.
    truncated: bool = False


def select_reference_vertex(vertices, n_rv: int) -> int:
    """Index of the vertex with the least averaged surrounding angle.

    For each vertex the interior-side angles spanned by its j-th neighbors
    (j = 1..n_rv) are averaged; ties resolve to the lowest index within a
    1e-9 radian tolerance.
    """
    v = np.asarray(vertices, dtype=np.float64)
    n = len(v)
    total = np.zeros(n)
    for j in range(1, n_rv + 1):
        right = np.roll(v, j, axis=0)   # vertex i-j
        left = np.roll(v, -j, axis=0)   # vertex i+j
        u = right - v
        w = left - v
        ang = np.arctan2(u[:, 0] * w[:, 1] - u[:, 1] * w[:, 0],
                         u[:, 0] * w[:, 0] + u[:, 1] * w[:, 1])
        total += np.mod(ang, 2.0 * math.pi)
    total /= n_rv
    return int(np.flatnonzero(total <= total.min() + 1e-9)[0])


def base_length(vertices, ref: int, n: int) -> float:
    """Mean length of the n nearest front edges on each side of ``ref``."""
    v = np.asarray(vertices, dtype=np.float64)
    count = len(v)
    if not n < count / 2:
        raise ValueError(f"edge window n={n} too large for a {count}-vertex boundary")
    return _base_length_unchecked(v, ref, n)


def _base_length_unchecked(v: np.ndarray, ref: int, n: int) -> float:
    count = len(v)
    total = 0.0
    for j in range(n):
        total += float(np.linalg.norm(v[(ref + j + 1) % count] - v[(ref + j) % count]))
        total += float(np.linalg.norm(v[(ref - j - 1) % count] - v[(ref - j) % count]))
    return total / (2 * n)


def boundary_quality(junction_angles_deg: Tuple[float, float], m_angle_deg: float,
                     q_dist: float = 1.0) -> float:
    """Penalty in [-1, 0] for what the cut leaves behind on the front.

    Junction angles below ``m_angle_deg`` and new vertices crowding nearby
    edges (q_dist < 1) both pull the value down; 0 means the remaining front
    is locally unharmed.
    """
    capped = min(min(a, m_angle_deg) for a in junction_angles_deg)
    capped = max(capped, 0.0)
    return math.sqrt((capped / m_angle_deg) * q_dist) - 1.0


def proximity_ratio(d_min: float, d1: float, d2: float) -> float:
    """Crowding ratio of a new vertex: its clearance over its mean new-edge length."""
    mean = 0.5 * (d1 + d2)
    if mean <= 0.0:
        return 1.0
    return d_min / mean if d_min < mean else 1.0


def density_term(element_area: float, e_min: float, e_max: float,
                 kappa: float, upsilon: float) -> float:
    """Reward shaping that keeps element areas in a front-derived band.

    -1 below the minimum area, a linear ramp inside the band, 0 above it.
    A uniform front (e_min == e_max) collapses the band; the ramp then
    reports 0.
    """
    a_min = upsilon * e_min * e_min
    step = (e_max - e_min) / kappa + e_min
    a_max = upsilon * step * step
    if element_area < a_min:
        return -1.0
    if element_area >= a_max:
        return 0.0
    if a_max == a_min:
        return 0.0
    return (element_area - a_min) / (a_max - a_min)


def _rotate(vec: np.ndarray, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([c * vec[0] - s * vec[1], s * vec[0] + c * vec[1]])


def decode_action(raw, vertices, ref: int, cfg: EnvConfig) -> MeshAction:
    """Map a policy triple in [-1, 1]^3 to a rule type and candidate vertex.

    The first component gates the rule type by sign.  For rule type 1 the
    remaining two map linearly onto the fan at the reference vertex: radius in
    [0, radius_alpha * L] and angle in [0, interior angle], measured
    counterclockwise from the direction toward the first right neighbor.
    """
    raw = np.clip(np.asarray(raw, dtype=np.float64).reshape(3), -1.0, 1.0)
    if raw[0] < 0.0:
        return MeshAction(raw=raw, rule_type=0)
    v = np.asarray(vertices, dtype=np.float64)
    count = len(v)
    v0 = v[ref]
    right1 = v[(ref - 1) % count]
    left1 = v[(ref + 1) % count]
    n_eff = min(cfg.n, (count - 1) // 2)
    length = _base_length_unchecked(v, ref, max(n_eff, 1))
    theta = ccw_angle(v0, right1, left1)
    radius_frac = 0.5 * (raw[1] + 1.0)
    angle_frac = 0.5 * (raw[2] + 1.0)
    radius = radius_frac * cfg.radius_alpha * length
    ref_dir = right1 - v0
    ref_dir = ref_dir / np.linalg.norm(ref_dir)
    vertex = v0 + radius * _rotate(ref_dir, angle_frac * theta)
    return MeshAction(raw=raw, rule_type=1, radius_frac=radius_frac,
                      angle_frac=angle_frac, vertex=vertex)


def observe(vertices, ref: int, cfg: EnvConfig, area_ratio: float = 1.0) -> np.ndarray:
    """Scale-free encoding of the front around the reference vertex.

    Polar (radius, angle) pairs for the n left neighbors (outermost first),
    the n right neighbors (innermost first) and the g fan probes, then the
    remaining-area ratio.  Radii divide by the base length and angles measure
    from the direction toward the first right neighbor, so the vector is
    invariant under similarity transforms of the front.
    """
    v = np.asarray(vertices, dtype=np.float64)
    count = len(v)
    v0 = v[ref]
    right1 = v[(ref - 1) % count]
    left1 = v[(ref + 1) % count]
    n_eff = min(cfg.n, (count - 1) // 2)
    length = _base_length_unchecked(v, ref, max(n_eff, 1))
    theta = ccw_angle(v0, right1, left1)

    points: List[np.ndarray] = []
    for j in range(cfg.n, 0, -1):               # V_{l,n} .. V_{l,1}
        points.append(v[(ref + j) % count])
    for j in range(1, cfg.n + 1):               # V_{r,1} .. V_{r,n}
        points.append(v[(ref - j) % count])
    points.extend(_fan_probes(v, ref, cfg, length, theta))

    polar = polar_normalize(np.vstack(points), v0, right1, length)
    return np.append(polar.ravel(), area_ratio)


def _fan_probes(v: np.ndarray, ref: int, cfg: EnvConfig, length: float,
                theta: float) -> List[np.ndarray]:
    """One probe point per fan slice: nearest front vertex inside the slice,
    else the first front hit along the slice bisector, else the bisector point
    at full probe reach."""
    count = len(v)
    v0 = v[ref]
    right1 = v[(ref - 1) % count]
    reach = cfg.fan_beta * length

    rel = v - v0
    radii = np.linalg.norm(rel, axis=1)
    ref_dir = right1 - v0
    ref_angle = math.atan2(ref_dir[1], ref_dir[0])
    angles = np.mod(np.arctan2(rel[:, 1], rel[:, 0]) - ref_angle, 2.0 * math.pi)

    eligible = np.ones(count, dtype=bool)
    for idx in (ref, (ref - 1) % count, (ref + 1) % count):
        eligible[idx] = False  # the fan's own frame vertices

    ref_unit = ref_dir / np.linalg.norm(ref_dir)
    starts = v
    ends = np.roll(v, -1, axis=0)
    edge_skip = np.zeros(count, dtype=bool)
    edge_skip[ref] = True
    edge_skip[(ref - 1) % count] = True  # edges incident to the reference vertex

    slice_width = theta / cfg.g
    atol = 1e-12
    probes: List[np.ndarray] = []
    for k in range(cfg.g):
        lo = k * slice_width
        hi = (k + 1) * slice_width
        mask = (eligible & (radii <= reach * (1.0 + 1e-12))
                & (angles >= lo - atol) & (angles <= hi + atol))
        if np.any(mask):
            cand = np.flatnonzero(mask)
            r = radii[cand]
            # radius ties within a relative band resolve by angle, keeping the
            # pick stable under similarity-transform rounding
            near = cand[r <= r.min() + 1e-9 * max(r.min(), length)]
            order = np.lexsort((near, angles[near]))
            probes.append(v[near[order[0]]])
            continue
        bisector = _rotate(ref_unit, lo + 0.5 * slice_width)
        t_hit = _ray_first_hit(v0, bisector, starts, ends, edge_skip)
        if t_hit is not None and t_hit <= reach:
            probes.append(v0 + t_hit * bisector)
        else:
            probes.append(v0 + reach * bisector)
    return probes


def _ray_first_hit(origin: np.ndarray, direction: np.ndarray, starts: np.ndarray,
                   ends: np.ndarray, skip: np.ndarray) -> Optional[float]:
    """Smallest positive ray parameter hitting any unskipped segment."""
    d = ends - starts
    denom = direction[0] * d[:, 1] - direction[1] * d[:, 0]
    rel = starts - origin
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (rel[:, 0] * d[:, 1] - rel[:, 1] * d[:, 0]) / denom
        s = (rel[:, 0] * direction[1] - rel[:, 1] * direction[0]) / -denom
    ok = (~skip) & (np.abs(denom) > 1e-300) & (t > 1e-12) & (s >= -1e-12) & (s <= 1.0 + 1e-12)
    if not np.any(ok):
        return None
    return float(np.min(t[ok]))


class MeshEnv:
    """Mutable episode state for one front; helper operations stay pure.

    A single instance is not thread safe; run independent instances in
    parallel instead.
    """

    def __init__(self, boundary, cfg: Optional[EnvConfig] = None):
        self.cfg = cfg if cfg is not None else EnvConfig()
        if isinstance(boundary, Boundary):
            self._boundary0 = boundary.vertices.copy()
        else:
            self._boundary0 = Boundary(boundary).vertices.copy()
        self._verts: np.ndarray = self._boundary0.copy()
        self._started = False
        self.reset()

    # -- episode lifecycle -------------------------------------------------

    def reset(self, boundary=None) -> np.ndarray:
        if boundary is not None:
            if isinstance(boundary, Boundary):
                self._boundary0 = boundary.vertices.copy()
            else:
                self._boundary0 = Boundary(boundary).vertices.copy()
        self._verts = self._boundary0.copy()
        self._area0 = abs(signed_area(self._verts))
        self._steps = 0
        self._consec_invalid = 0
        self._done = False
        self._meshable = len(self._verts) % 2 == 0
        self._max_steps = (self.cfg.max_steps if self.cfg.max_steps is not None
                           else 20 * len(self._verts))
        self._mesh_vertices: List[np.ndarray] = []
        self._vertex_ids: Dict[Tuple[float, float], int] = {}
        self._quads: List[Tuple[int, int, int, int]] = []
        self._started = True
        self._refresh()
        return self._obs

    def _refresh(self) -> None:
        v = self._verts
        self._angles = interior_angles(v)
        self._ref = select_reference_vertex(v, self.cfg.n_rv)
        count = len(v)
        n_eff = max(1, min(self.cfg.n, (count - 1) // 2))
        self._L = _base_length_unchecked(v, self._ref, n_eff)
        self._theta = ccw_angle(v[self._ref], v[(self._ref - 1) % count],
                                v[(self._ref + 1) % count])
        self._area_ratio = abs(signed_area(v)) / self._area0
        self._obs = observe(v, self._ref, self.cfg, self._area_ratio)

    # -- read-only views ---------------------------------------------------

    @property
    def observation(self) -> np.ndarray:
        return self._obs

    @property
    def done(self) -> bool:
        return self._done

    @property
    def boundary_vertices(self) -> np.ndarray:
        return self._verts.copy()

    @property
    def reference_vertex(self) -> int:
        return self._ref

    @property
    def steps_taken(self) -> int:
        return self._steps

    @property
    def area_ratio(self) -> float:
        return self._area_ratio

    def mesh(self) -> Mesh:
        if not self._mesh_vertices:
            return Mesh(vertices=np.zeros((0, 2)), quads=list(self._quads))
        return Mesh(vertices=np.vstack(self._mesh_vertices), quads=list(self._quads))

    # -- stepping ----------------------------------------------------------

    def step(self, action) -> StepResult:
        """Apply one action; see the module docstring for the update rules."""
        if not self._started or self._done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        raw = action.raw if isinstance(action, MeshAction) else np.asarray(action)

        extraction = self._auto_round_extraction()
        if extraction is None:
            decoded = (action if isinstance(action, MeshAction)
                       else decode_action(raw, self._verts, self._ref, self.cfg))
            extraction = self._build_extraction(decoded)

        self._steps += 1

        if extraction is None:
            self._consec_invalid += 1
            reward = INVALID_REWARD
            outcome = OUTCOME_INVALID
            element = None
        else:
            quad, new_verts, junction_idx, new_vertex_ids = extraction
            self._consec_invalid = 0
            self._emit(quad)
            element = quad
            pre_lengths = edge_lengths(self._verts)
            self._verts = new_verts
            if len(new_verts) == 4:
                self._emit(self._final_quad(new_verts))
                reward = COMPLETION_REWARD
                outcome = OUTCOME_COMPLETED
            else:
                reward = self._measure(quad, junction_idx, new_vertex_ids,
                                       float(pre_lengths.min()), float(pre_lengths.max()))
                outcome = OUTCOME_VALID

        completed = outcome == OUTCOME_COMPLETED
        hit_invalid_cap = self._consec_invalid >= self.cfg.max_consecutive_invalid
        hit_step_cap = self._steps >= self._max_steps
        failed = not completed and (hit_invalid_cap or hit_step_cap or not self._meshable)
        truncated = (failed and hit_step_cap and not hit_invalid_cap and self._meshable)
        self._done = completed or failed
        if failed:
            outcome = OUTCOME_FAILED
            element = None

        if extraction is not None:
            self._refresh()
        return StepResult(observation=self._obs, reward=reward, done=self._done,
                          outcome=outcome, element=element, truncated=truncated)

    # -- extraction construction -------------------------------------------

    def _build_extraction(self, decoded: MeshAction):
        """Candidate quad, updated front, junction indices and new-vertex
        positions for a decoded action; None when the cut is invalid."""
        v = self._verts
        count = len(v)
        r = self._ref
        l1 = (r + 1) % count
        r1 = (r - 1) % count
        if decoded.rule_type == 0:
            if count < 6:
                return None
            r2 = (r - 2) % count
            quad = np.array([v[l1], v[r], v[r1], v[r2]])
            if not quad_is_valid(quad, v, (l1, r, r1, r2)):
                return None
            removed = sorted((r, r1))
            new_verts = np.delete(v, removed, axis=0)

            def shifted(old: int) -> int:
                return old - sum(1 for d in removed if d < old)

            junction_idx = (shifted(r2), shifted(l1))
            return quad, new_verts, junction_idx, []

        vertex = decoded.vertex
        if vertex is None:
            return None
        quad = np.array([v[l1], v[r], v[r1], vertex])
        if not quad_is_valid(quad, v, (l1, r, r1, None)):
            return None
        new_verts = v.copy()
        new_verts[r] = vertex
        return quad, new_verts, (r1, l1), [r]

    def _auto_round_extraction(self):
        """Front-rounding cut applied by the environment itself when the front
        has gone nearly circular (every angle wide, reference angle widest):
        pushes the edge right of the reference vertex inward by one base
        length, adding two vertices."""
        deg = np.degrees(self._angles)
        if not (np.all(deg > 150.0) and math.degrees(self._avg_ref_angle()) > 160.0):
            return None
        v = self._verts
        count = len(v)
        r = self._ref
        r1 = (r - 1) % count
        edge = v[r] - v[r1]
        norm = np.linalg.norm(edge)
        if norm == 0.0:
            return None
        inward = np.array([edge[1], -edge[0]]) / norm
        v2 = v[r1] + self._L * inward
        v3 = v[r] + self._L * inward
        quad = np.array([v[r], v[r1], v2, v3])
        if not quad_is_valid(quad, v, (r, r1, None, None)):
            return None
        new_verts = np.insert(v, r, [v2, v3], axis=0)
        pos_r1 = r - 1 if r > 0 else count + 1
        junction_idx = (pos_r1, r + 2)
        return quad, new_verts, junction_idx, [r, r + 1]

    def _avg_ref_angle(self) -> float:
        v = self._verts
        count = len(v)
        total = 0.0
        for j in range(1, self.cfg.n_rv + 1):
            total += ccw_angle(v[self._ref], v[(self._ref - j) % count],
                               v[(self._ref + j) % count])
        return total / self.cfg.n_rv

    # -- reward ------------------------------------------------------------

    def _measure(self, quad: np.ndarray, junction_idx: Tuple[int, int],
                 new_vertex_ids: List[int], e_min: float, e_max: float) -> float:
        new_verts = self._verts
        count = len(new_verts)
        angles = np.degrees(interior_angles(new_verts))
        junction = (float(angles[junction_idx[0]]), float(angles[junction_idx[1]]))

        q_dist = 1.0
        if new_vertex_ids:
            starts = new_verts
            ends = np.roll(new_verts, -1, axis=0)
            for pos in new_vertex_ids:
                p = new_verts[pos]
                dists = point_segments_distance(p, starts, ends)
                dists[pos] = np.inf
                dists[(pos - 1) % count] = np.inf  # edges incident to the new vertex
                d_min = float(np.min(dists))
                d1 = float(np.linalg.norm(p - new_verts[(pos - 1) % count]))
                d2 = float(np.linalg.norm(p - new_verts[(pos + 1) % count]))
                q_dist = min(q_dist, proximity_ratio(d_min, d1, d2))

        quality = element_quality(quad)
        penalty = boundary_quality(junction, self.cfg.m_angle, q_dist)
        density = density_term(abs(signed_area(quad)), e_min, e_max,
                               self.cfg.kappa, self.cfg.upsilon)
        return quality + penalty + density

    def _emit(self, quad: np.ndarray) -> None:
        ids = []
        for corner in quad:
            key = (float(corner[0]), float(corner[1]))
            idx = self._vertex_ids.get(key)
            if idx is None:
                idx = len(self._mesh_vertices)
                self._vertex_ids[key] = idx
                self._mesh_vertices.append(np.asarray(corner, dtype=np.float64))
            ids.append(idx)
        self._quads.append(tuple(ids))

    @staticmethod
    def _final_quad(verts: np.ndarray) -> np.ndarray:
        # stored clockwise; elements are wound counterclockwise
        return verts[::-1].copy()
