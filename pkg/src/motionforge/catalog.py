"""Constructors for common constraint systems and a catalog of named examples.

Coordinates are passed as ``(n, d)`` arrays (one row per vertex) and vertex
indices are 0-based.  The named examples are written with 1-based indices,
matching the file formats, and converted on construction.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .constraints import (
    ConstraintKind,
    ConstraintSystem,
    QuadraticMap,
    TrivialKind,
    distance_constraint,
    make_system,
    planarity_constraint,
    unit_norm_constraint,
    volume2d_constraint,
)
from .retraction import LagrangeState, TrackerConfig, newton_correct, project_onto
from .rigidity import matrix_rank
from .tracker import DeformationPath

log = logging.getLogger(__name__)

CONTACT_TOL = 1e-6


class CatalogError(ValueError):
    pass


def _coords(coords) -> np.ndarray:
    arr = np.asarray(coords, dtype=float)
    if arr.ndim != 2:
        raise CatalogError("coordinates must be a 2-D array with one row per vertex")
    return arr


def _check_index(i: int, n: int):
    if not 0 <= i < n:
        raise CatalogError(f"vertex index {i} out of range for {n} vertices")


# ---------------------------------------------------------------------------
# bar-joint frameworks


def framework(edges: Iterable[Sequence[int]], coords, pins: Iterable[int] = ()) -> ConstraintSystem:
    """One squared-distance constraint per edge plus pins."""
    pts = _coords(coords)
    n, d = pts.shape
    seen = set()
    cons = []
    for u, v in edges:
        u, v = int(u), int(v)
        _check_index(u, n)
        _check_index(v, n)
        key = (min(u, v), max(u, v))
        if u == v or key in seen:
            raise CatalogError(f"repeated or degenerate edge {u}-{v}")
        seen.add(key)
        length_sq = float(np.sum((pts[u] - pts[v]) ** 2))
        if length_sq == 0.0:
            raise CatalogError(f"edge {u}-{v} has coincident endpoints")
        cons.append(distance_constraint(d, n, u, v, length_sq))
    return make_system(d, pts, cons, pins)


def edges_of(system: ConstraintSystem) -> list[tuple[int, int]]:
    return [c.vertices for c in system.constraints if c.kind is ConstraintKind.DISTANCE]


# ---------------------------------------------------------------------------
# sticky packings


@dataclass(frozen=True, eq=False)
class PackingSpec:
    radius: float
    centers: np.ndarray
    contact_tol: float = CONTACT_TOL

    def __post_init__(self):
        centers = _coords(self.centers)
        object.__setattr__(self, "centers", centers)
        if self.radius <= 0:
            raise CatalogError("radius must be positive")
        n = centers.shape[0]
        for i, j in itertools.combinations(range(n), 2):
            if np.linalg.norm(centers[i] - centers[j]) < 2 * self.radius - self.contact_tol:
                raise CatalogError(f"spheres {i} and {j} overlap")


def detect_contacts(spec: PackingSpec) -> list[tuple[int, int]]:
    n = spec.centers.shape[0]
    target = 2.0 * spec.radius
    return [(i, j) for i, j in itertools.combinations(range(n), 2)
            if abs(np.linalg.norm(spec.centers[i] - spec.centers[j]) - target) <= spec.contact_tol]


def sphere_packing(spec: PackingSpec, pins: Iterable[int] = ()) -> ConstraintSystem:
    """Contact graph of an equal-radius packing; every contact is a bar of length ``2r``.

    Contacts within ``contact_tol`` of tangency are snapped to exact length.
    """
    pts = spec.centers
    n, d = pts.shape
    target_sq = (2.0 * spec.radius) ** 2
    cons = [distance_constraint(d, n, u, v, target_sq) for u, v in detect_contacts(spec)]
    system = make_system(d, pts, cons, pins) if _snapped(pts, cons) else None
    if system is None:
        # tangencies within tolerance but not exact: project onto the contact set first
        qm = QuadraticMap.from_constraints(cons, n * d)
        out = project_onto(qm, pts.reshape(-1))
        system = make_system(d, out.z.reshape(n, d), cons, pins)
    return system


def _snapped(pts, cons) -> bool:
    x = pts.reshape(-1)
    return all(abs(c(x)) <= 1e-9 for c in cons)


def sticky_update(spec: PackingSpec, system: ConstraintSystem, x,
                  config: TrackerConfig = TrackerConfig()) -> Optional[ConstraintSystem]:
    """Add a bar for every pair of spheres that has come closer than ``2r``.

    The current point is projected onto the enlarged constraint set by the
    closest-point corrector.  Returns ``None`` when no new contact formed.
    """
    x = np.asarray(x, dtype=float)
    pts = system.points(x)
    existing = {tuple(sorted(e)) for e in edges_of(system)}
    target = 2.0 * spec.radius
    new = []
    for i, j in itertools.combinations(range(system.n_vertices), 2):
        if (i, j) in existing:
            continue
        if np.linalg.norm(pts[i] - pts[j]) < target - spec.contact_tol:
            new.append(distance_constraint(system.dim, system.n_vertices, i, j, target * target))
    if not new:
        return None
    cons = system.constraints + tuple(new)
    qm = QuadraticMap.from_constraints(cons, system.size)
    state, _, ok = newton_correct(qm, LagrangeState(x.copy(), np.zeros(len(cons))), x, config)
    if not ok:
        out = project_onto(qm, x)
        if not out.converged:
            raise RuntimeError("could not project onto the enlarged contact set")
        state = LagrangeState(out.z, np.zeros(len(cons)))
    log.info("new contact(s): %s", [c.vertices for c in new])
    return system.replace(realization=state.x, constraints=cons)


# ---------------------------------------------------------------------------
# polytopes


@dataclass(frozen=True, eq=False)
class PolytopeSpec:
    """Facets as vertex-index lists and vertex coordinates of shape ``(n, d)``."""

    faces: tuple[tuple[int, ...], ...]
    vertex_coords: np.ndarray
    normals_init: np.ndarray = field(init=False)
    edges: tuple[tuple[int, int], ...] = field(init=False)

    def __post_init__(self):
        pts = _coords(self.vertex_coords)
        faces = tuple(tuple(int(i) for i in f) for f in self.faces)
        n, d = pts.shape
        for f in faces:
            if len(f) < 3:
                raise CatalogError("every face needs at least 3 vertices")
            for i in f:
                _check_index(i, n)
        edges = polytope_edges(faces)
        if d == 3 and n - len(edges) + len(faces) != 2:
            raise CatalogError("vertex, edge and face counts violate |V| - |E| + |F| = 2")
        centroid = pts.mean(axis=0)
        normals = []
        for f in faces:
            fp = pts[list(f)]
            fc = fp.mean(axis=0)
            _, _, vt = np.linalg.svd(fp - fc)
            nrm = vt[-1]
            if nrm @ (fc - centroid) < 0:
                nrm = -nrm
            normals.append(nrm)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "vertex_coords", pts)
        object.__setattr__(self, "normals_init", np.array(normals))
        object.__setattr__(self, "edges", edges)


def polytope_edges(faces: Sequence[Sequence[int]]) -> tuple[tuple[int, int], ...]:
    """Edges as the two-element intersections of pairs of facets."""
    out = set()
    for a, b in itertools.combinations(faces, 2):
        common = set(a) & set(b)
        if len(common) == 2:
            out.add(tuple(sorted(common)))
    return tuple(sorted(out))


def polytope(spec: PolytopeSpec, pins: Iterable[int] = ()) -> ConstraintSystem:
    """Edge lengths, facet planarity and unit facet normals.

    Facet normals are appended as extra direction vertices after the points.
    Planarity uses the star form ``a^T (p_u - p_ref) = 0`` against the first
    vertex of each facet.
    """
    pts = spec.vertex_coords
    n, d = pts.shape
    nf = len(spec.faces)
    total = n + nf
    coords = np.vstack([pts, spec.normals_init])
    cons = []
    for u, v in spec.edges:
        cons.append(distance_constraint(d, total, u, v, float(np.sum((pts[u] - pts[v]) ** 2))))
    for k, f in enumerate(spec.faces):
        ref = f[0]
        for u in f[1:]:
            cons.append(planarity_constraint(d, total, n + k, u, ref))
    for k in range(nf):
        cons.append(unit_norm_constraint(d, total, n + k))
    x = coords.reshape(-1)
    worst = max((abs(c(x)) for c in cons if c.kind is ConstraintKind.PLANARITY), default=0.0)
    if worst > 1e-8:
        raise CatalogError(f"a face is not planar (residual {worst:.3e})")
    return make_system(d, coords, cons, pins, directions=range(n, total))


def edge_contraction_path(system: ConstraintSystem, edge: Sequence[int], gamma: float, steps: int,
                          config: TrackerConfig = TrackerConfig()) -> DeformationPath:
    """Continuation in the squared length of one edge, all other constraints held.

    The target squared length moves linearly from ``L0^2`` to ``(gamma L0)^2``
    over ``steps`` steps; each step is corrected to the nearest point of the
    modified constraint set.
    """
    u, v = sorted(int(i) for i in edge)
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    idx = next((i for i, c in enumerate(system.constraints)
                if c.kind is ConstraintKind.DISTANCE and tuple(sorted(c.vertices)) == (u, v)), None)
    if idx is None:
        raise CatalogError(f"no edge {u}-{v} in the system")
    l0_sq = -system.constraints[idx].const_term
    x = system.realization.copy()
    path = DeformationPath.start(system, x)
    cons = list(system.constraints)
    for j in range(1, steps + 1):
        target = l0_sq + (j / steps) * (gamma * gamma * l0_sq - l0_sq)
        cons[idx] = system.constraints[idx].with_const(-target)
        qm = QuadraticMap.from_constraints(cons, system.size)
        state, _, ok = newton_correct(qm, LagrangeState(x.copy(), np.zeros(len(cons))), x, config)
        res = float(np.linalg.norm(qm.evaluate(state.x)))
        if not ok or res > 1e-8:
            path.error = f"corrector failed at contraction step {j}"
            return path
        step = state.x - x
        x = state.x
        path.append(x, step / max(np.linalg.norm(step), 1e-300), float(np.linalg.norm(step)),
                    float(np.linalg.norm(step)), res)
    path.final_system = system.replace(realization=x, constraints=cons)
    return path


# ---------------------------------------------------------------------------
# panels and volumes


def _panel_constraints(panels, pts) -> list:
    n, d = pts.shape
    pairs = []
    for panel in panels:
        panel = [int(i) for i in panel]
        if len(panel) < 3:
            raise CatalogError("panels need at least 3 vertices")
        for i in panel:
            _check_index(i, n)
        # a panel is a flat body: it only needs to span a (d-1)-dimensional facet
        if matrix_rank(pts[panel[1:]] - pts[panel[0]], 1e-10) < min(len(panel) - 1, d - 1):
            warnings.warn(f"panel {panel} is affinely degenerate", stacklevel=3)
        pairs.extend(itertools.combinations(panel, 2))
    return pairs


def body_hinge(panels, coords, pins: Iterable[int] = ()) -> ConstraintSystem:
    """Each panel is braced as a complete graph; shared vertices act as hinges."""
    pts = _coords(coords)
    pairs = _dedupe(_panel_constraints(panels, pts))
    return framework(pairs, pts, pins)


def body_bar(bars, panels, coords, pins: Iterable[int] = ()) -> ConstraintSystem:
    """Complete-graph panels plus extra bars between them."""
    pts = _coords(coords)
    pairs = _dedupe(_panel_constraints(panels, pts) + [tuple(int(i) for i in b) for b in bars])
    return framework(pairs, pts, pins)


def _dedupe(pairs):
    out, seen = [], set()
    for u, v in pairs:
        key = (min(u, v), max(u, v))
        if key not in seen:
            seen.add(key)
            out.append(key)
    return out


def volume_hypergraph(triangles, coords2d, pins: Iterable[int] = ()) -> ConstraintSystem:
    """Fixed signed areas (as 3x3 determinants) of triangles in the plane."""
    pts = _coords(coords2d)
    n, d = pts.shape
    if d != 2:
        raise CatalogError("volume constraints are supported in the plane only")
    cons = []
    for tri in triangles:
        tri = tuple(int(i) for i in tri)
        if len(tri) != 3:
            raise CatalogError("volume hyperedges must have 3 vertices")
        for i in tri:
            _check_index(i, n)
        a, b, c = pts[list(tri)]
        det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
        cons.append(volume2d_constraint(n, tri, det))
    return make_system(2, pts, cons, pins, TrivialKind.VOLUME_PRESERVING)


# ---------------------------------------------------------------------------
# named examples


def _one_based(pairs):
    return [tuple(i - 1 for i in p) for p in pairs]


def _rows(rows) -> np.ndarray:
    """Coordinates listed as d rows of n entries, as in the catalog tables."""
    return np.asarray(rows, dtype=float).T


def _three_prism():
    s = math.sqrt(3) / 2
    coords = _rows([[0, 0, s, 1, 1, 1 + s], [0, 1, 0.5, 0, 1, 0.5]])
    edges = [(1, 2), (1, 3), (2, 3), (4, 5), (5, 6), (4, 6), (1, 4), (2, 5), (3, 6)]
    return framework(_one_based(edges), coords, [0, 3])


def _three_prism_symmetric():
    s = math.sqrt(3)
    coords = np.array([[1, 0], [-0.5, s / 2], [-0.5, -s / 2], [2, 0], [-1, s], [-1, -s]])
    edges = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 5), (3, 6), (4, 5), (4, 6), (5, 6)]
    return framework(_one_based(edges), coords)


def _double_watt():
    coords = _rows([[0, 1, 2, 1, 3, 4, 5, 7, 6, 7, 8], [0, 0, 1, 2, 2, 2, 2, 2, 1, 0, 0]])
    edges = [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (2, 4), (3, 5),
             (6, 7), (7, 8), (8, 9), (9, 10), (10, 11), (7, 9), (8, 10),
             (3, 9)]
    return framework(_one_based(edges), coords, [0, 5, 10])


def _four_bar():
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return framework(_one_based([(1, 4), (2, 3), (3, 4)]), coords, [0, 1])


def _k3_collinear():
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    return framework(_one_based([(1, 2), (2, 3), (1, 3)]), coords)


def disk_packing_spec() -> PackingSpec:
    r2 = math.sqrt(2)
    return PackingSpec(1.0, _rows([[0, 7 / 4, 7 / 2, 7 / 2 + r2], [0, -math.sqrt(15 / 16), 0, r2]]))


def _disk_packing_4():
    return sphere_packing(disk_packing_spec(), [0])


def _octahedral_volume():
    coords = _rows([[0, 3, 0, 1, 1, 0.5], [0, 0, 3, 1, 0.5, 1]])
    tris = [(1, 3, 6), (1, 2, 5), (2, 3, 4), (1, 5, 6), (6, 4, 5)]
    return volume_hypergraph(_one_based(tris), coords, [3, 4, 5])


def cube_polytope_spec() -> PolytopeSpec:
    coords = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)], dtype=float)
    # vertex index = x + 2y + 4z
    faces = [(0, 2, 3, 1), (4, 5, 7, 6), (0, 1, 5, 4), (2, 6, 7, 3), (0, 4, 6, 2), (1, 3, 7, 5)]
    return PolytopeSpec(faces, coords)


def _cube_polytope():
    return polytope(cube_polytope_spec())


def _pentagon_body_hinge():
    rows = [[0] + [math.cos(2 * math.pi * k / 5) for k in range(1, 6)],
            [0] + [math.sin(2 * math.pi * k / 5) for k in range(1, 6)],
            [1, 0, 0, 0, 0, 0]]
    panels = [[1, 2, 3], [1, 3, 4], [1, 4, 5], [1, 5, 6], [1, 6, 2]]
    return body_hinge(_one_based(panels), _rows(rows))


def _cube_body_bar():
    rows = [[0, 1, 1, 0, 0, 1, 1, 0], [0, 0, 1, 1, 0, 0, 1, 1], [0, 0, 0, 0, 1, 1, 1, 1]]
    bars = [(1, 5), (2, 6), (3, 7), (4, 8)]
    panels = [[1, 2, 3, 4], [5, 6, 7, 8]]
    return body_bar(_one_based(bars), _one_based(panels), _rows(rows))


_BUILTINS = {
    "three_prism": (_three_prism, "triangular prism framework, bottom rung pinned"),
    "three_prism_symmetric": (_three_prism_symmetric, "rotation-symmetric 3-prism, second-order rigid"),
    "double_watt": (_double_watt, "two Watt linkages coupled tracer to tracer, starts at a cusp"),
    "four_bar": (_four_bar, "unit-square four-bar linkage with the ground link pinned"),
    "k3_collinear": (_k3_collinear, "triangle on three collinear points"),
    "disk_packing_4": (_disk_packing_4, "sticky packing of four unit disks, first disk pinned"),
    "octahedral_volume": (_octahedral_volume, "five area-constrained triangles in the plane"),
    "cube_polytope": (_cube_polytope, "unit cube with edge lengths and planar faces"),
    "pentagon_body_hinge": (_pentagon_body_hinge, "five triangular panels forming a pentagonal pyramid"),
    "cube_body_bar": (_cube_body_bar, "two square panels joined by four bars"),
}


def builtin_names() -> list[str]:
    return list(_BUILTINS)


def describe(name: str) -> str:
    return _BUILTINS[name][1]


def builtin(name: str) -> ConstraintSystem:
    try:
        factory = _BUILTINS[name][0]
    except KeyError:
        raise CatalogError(f"unknown example {name!r}; available: {', '.join(_BUILTINS)}") from None
    return factory()


def sticky_spec_for(name: str) -> Optional[PackingSpec]:
    """Packing data behind a named example, if it is a packing."""
    return disk_packing_spec() if name == "disk_packing_4" else None
