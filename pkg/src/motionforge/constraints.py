"""Quadratic constraint systems over a flattened realization vector.

Every constraint is stored as the explicit triple ``(A, b, c)`` so that

    g(x) = x^T A x + b^T x + c

with ``A`` symmetric.  The rigidity matrix and the second-order term are then
closed-form: row ``i`` of the Jacobian is ``(2 A_i x + b_i)^T`` and the exact
second-order Taylor term along ``v`` is ``v^T A_i v``.

Distance constraints are stored unscaled as ``||p_u - p_v||^2 - L^2``.  Some
texts use the half-scaled form, whose rigidity matrix is exactly half of ours;
ranks and kernels agree.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

FEASIBILITY_TOL = 1e-8


class ConstraintKind(str, enum.Enum):
    DISTANCE = "distance"
    PIN = "pin"
    PLANARITY = "planarity"
    UNIT_NORM = "unit_norm"
    VOLUME2D = "volume2d"
    GENERIC = "generic"


class TrivialKind(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    VOLUME_PRESERVING = "volume_preserving"
    PINS_ONLY = "pins_only"


class DimensionError(ValueError):
    """Raised when a vector does not match the system's coordinate count."""


class InfeasibleRealization(ValueError):
    """Raised when a realization violates its own constraints."""


@dataclass(frozen=True, eq=False)
class QuadraticConstraint:
    quad: np.ndarray
    lin: np.ndarray
    const_term: float
    kind: ConstraintKind = ConstraintKind.GENERIC
    # 0-based vertex indices involved; metadata for rendering and I/O only
    vertices: tuple[int, ...] = ()

    def __post_init__(self):
        quad = np.array(self.quad, dtype=float)
        lin = np.array(self.lin, dtype=float)
        if quad.ndim != 2 or quad.shape[0] != quad.shape[1]:
            raise ValueError("quadratic part must be a square matrix")
        if lin.shape != (quad.shape[0],):
            raise ValueError("linear part must match the quadratic part")
        # exact symmetry: average with the transpose
        quad = 0.5 * (quad + quad.T)
        quad.setflags(write=False)
        lin.setflags(write=False)
        object.__setattr__(self, "quad", quad)
        object.__setattr__(self, "lin", lin)
        object.__setattr__(self, "const_term", float(self.const_term))
        object.__setattr__(self, "kind", ConstraintKind(self.kind))
        object.__setattr__(self, "vertices", tuple(int(i) for i in self.vertices))

    @property
    def size(self) -> int:
        return self.quad.shape[0]

    def __call__(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.quad @ x + self.lin @ x + self.const_term)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * self.quad @ np.asarray(x, dtype=float) + self.lin

    def with_const(self, const_term: float) -> "QuadraticConstraint":
        return QuadraticConstraint(self.quad, self.lin, const_term, self.kind, self.vertices)


class QuadraticMap:
    """A stack of quadratic polynomials ``R^N -> R^m`` evaluated in bulk.

    This is the numerical workhorse shared by constraint systems and their
    randomized views (``Lambda @ g``).
    """

    def __init__(self, quad: np.ndarray, lin: np.ndarray, const: np.ndarray):
        self.quad = np.asarray(quad, dtype=float)
        self.lin = np.asarray(lin, dtype=float)
        self.const = np.asarray(const, dtype=float)
        m = self.const.shape[0]
        if m == 0:
            n = self.lin.shape[1] if self.lin.ndim == 2 else 0
            self.quad = self.quad.reshape(0, n, n)
            self.lin = self.lin.reshape(0, n)
        for arr in (self.quad, self.lin, self.const):
            arr.setflags(write=False)

    @classmethod
    def from_constraints(cls, constraints: Sequence[QuadraticConstraint], size: int) -> "QuadraticMap":
        if not constraints:
            return cls(np.zeros((0, size, size)), np.zeros((0, size)), np.zeros(0))
        return cls(
            np.stack([c.quad for c in constraints]),
            np.stack([c.lin for c in constraints]),
            np.array([c.const_term for c in constraints]),
        )

    @property
    def n_rows(self) -> int:
        return self.const.shape[0]

    @property
    def size(self) -> int:
        return self.lin.shape[1]

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.size,):
            raise DimensionError(f"expected a vector of length {self.size}, got shape {x.shape}")
        return x

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        return np.einsum("kij,i,j->k", self.quad, x, x) + self.lin @ x + self.const

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        return 2.0 * np.einsum("kij,j->ki", self.quad, x) + self.lin

    def hessian_form(self, v: np.ndarray) -> np.ndarray:
        v = self._check(v)
        return np.einsum("kij,i,j->k", self.quad, v, v)

    def bilinear(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Polarization of ``2 * hessian_form``: ``bilinear(v, v) == 2 * hessian_form(v)``."""
        u = self._check(u)
        v = self._check(v)
        return 2.0 * np.einsum("kij,i,j->k", self.quad, u, v)

    def weighted_hessian(self, weights: np.ndarray) -> np.ndarray:
        """Hessian of ``weights . g``, i.e. ``2 * sum_k w_k A_k``."""
        return 2.0 * np.einsum("k,kij->ij", np.asarray(weights, dtype=float), self.quad)

    def combine(self, mixing: np.ndarray) -> "QuadraticMap":
        """The map ``x -> mixing @ g(x)``."""
        mixing = np.asarray(mixing, dtype=float)
        return QuadraticMap(
            np.einsum("rk,kij->rij", mixing, self.quad),
            mixing @ self.lin,
            mixing @ self.const,
        )


@dataclass(frozen=True, eq=False)
class ConstraintSystem:
    """Vertices in ``R^dim``, quadratic constraints and a realization.

    Vertex ``j`` occupies coordinates ``j*dim .. j*dim + dim - 1`` of the
    realization.  ``directions`` marks vertices that model directions rather
    than points (facet normals of a polytope); ambient translations do not
    act on them.
    """

    dim: int
    n_vertices: int
    realization: np.ndarray
    constraints: tuple[QuadraticConstraint, ...]
    pinned: frozenset[int] = frozenset()
    trivial_kind: TrivialKind = TrivialKind.EUCLIDEAN
    directions: frozenset[int] = frozenset()
    feasibility_tol: float = FEASIBILITY_TOL
    qmap: QuadraticMap = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim < 1 or self.n_vertices < 1:
            raise ValueError("dimension and vertex count must be positive")
        p = np.array(self.realization, dtype=float).reshape(-1)
        if p.shape != (self.size,):
            raise DimensionError(f"realization must have length dim*n = {self.size}")
        p.setflags(write=False)
        object.__setattr__(self, "realization", p)
        constraints = tuple(self.constraints)
        for c in constraints:
            if c.size != self.size:
                raise DimensionError("constraint size does not match dim*n")
        object.__setattr__(self, "constraints", constraints)
        object.__setattr__(self, "pinned", frozenset(int(i) for i in self.pinned))
        object.__setattr__(self, "directions", frozenset(int(i) for i in self.directions))
        object.__setattr__(self, "trivial_kind", TrivialKind(self.trivial_kind))
        for i in self.pinned | self.directions:
            if not 0 <= i < self.n_vertices:
                raise ValueError(f"vertex index {i} out of range")
        if self.trivial_kind is TrivialKind.VOLUME_PRESERVING:
            if any(c.kind not in (ConstraintKind.VOLUME2D, ConstraintKind.PIN) for c in constraints):
                raise ValueError("volume-preserving trivial motions need volume constraints only")
        object.__setattr__(self, "qmap", QuadraticMap.from_constraints(constraints, self.size))
        res = residual_norm(self, p)
        if res > self.feasibility_tol:
            raise InfeasibleRealization(
                f"realization violates the constraints (residual {res:.3e} > {self.feasibility_tol:.0e})"
            )

    @property
    def size(self) -> int:
        return self.dim * self.n_vertices

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    def vertex_slice(self, j: int) -> slice:
        return slice(j * self.dim, (j + 1) * self.dim)

    def points(self, x: np.ndarray | None = None) -> np.ndarray:
        """Realization reshaped to ``(n_vertices, dim)``."""
        x = self.realization if x is None else np.asarray(x, dtype=float)
        return x.reshape(self.n_vertices, self.dim)

    def replace(self, *, realization=None, constraints=None, pinned=None, trivial_kind=None,
                feasibility_tol=None) -> "ConstraintSystem":
        """Copy with some fields swapped; pin constraints are NOT regenerated."""
        return ConstraintSystem(
            dim=self.dim,
            n_vertices=self.n_vertices,
            realization=self.realization if realization is None else realization,
            constraints=self.constraints if constraints is None else tuple(constraints),
            pinned=self.pinned if pinned is None else pinned,
            trivial_kind=self.trivial_kind if trivial_kind is None else trivial_kind,
            directions=self.directions,
            feasibility_tol=self.feasibility_tol if feasibility_tol is None else feasibility_tol,
        )

    def at(self, x: np.ndarray, tol: float | None = None) -> "ConstraintSystem":
        """Same constraints, new realization (pins keep their original targets)."""
        return self.replace(realization=x, feasibility_tol=tol)


# ---------------------------------------------------------------------------
# constraint builders


def distance_constraint(dim: int, n: int, u: int, v: int, length_sq: float) -> QuadraticConstraint:
    size = dim * n
    quad = np.zeros((size, size))
    eye = np.eye(dim)
    su, sv = slice(u * dim, (u + 1) * dim), slice(v * dim, (v + 1) * dim)
    quad[su, su] += eye
    quad[sv, sv] += eye
    quad[su, sv] -= eye
    quad[sv, su] -= eye
    return QuadraticConstraint(quad, np.zeros(size), -float(length_sq), ConstraintKind.DISTANCE, (u, v))


def pin_constraints(dim: int, n: int, vertex: int, position: Sequence[float]) -> list[QuadraticConstraint]:
    size = dim * n
    out = []
    for k in range(dim):
        lin = np.zeros(size)
        lin[vertex * dim + k] = 1.0
        out.append(QuadraticConstraint(np.zeros((size, size)), lin, -float(position[k]),
                                       ConstraintKind.PIN, (vertex,)))
    return out


def unit_norm_constraint(dim: int, n: int, vertex: int) -> QuadraticConstraint:
    size = dim * n
    quad = np.zeros((size, size))
    s = slice(vertex * dim, (vertex + 1) * dim)
    quad[s, s] = np.eye(dim)
    return QuadraticConstraint(quad, np.zeros(size), -1.0, ConstraintKind.UNIT_NORM, (vertex,))


def planarity_constraint(dim: int, n: int, normal: int, u: int, v: int) -> QuadraticConstraint:
    """``a^T (p_u - p_v) = 0`` with ``a`` the coordinates of vertex ``normal``."""
    size = dim * n
    quad = np.zeros((size, size))
    eye = 0.5 * np.eye(dim)
    sa = slice(normal * dim, (normal + 1) * dim)
    su, sv = slice(u * dim, (u + 1) * dim), slice(v * dim, (v + 1) * dim)
    quad[sa, su] += eye
    quad[su, sa] += eye
    quad[sa, sv] -= eye
    quad[sv, sa] -= eye
    return QuadraticConstraint(quad, np.zeros(size), 0.0, ConstraintKind.PLANARITY, (normal, u, v))


def volume2d_constraint(n: int, tri: Sequence[int], target: float) -> QuadraticConstraint:
    """``det [[p_a, p_b, p_c], [1, 1, 1]] - target`` for points in the plane.

    The determinant expands to
    ``x_a y_b - x_b y_a + x_b y_c - x_c y_b + x_c y_a - x_a y_c``,
    i.e. twice the signed area of the triangle.
    """
    size = 2 * n
    quad = np.zeros((size, size))
    a, b, c = tri
    for i, j in ((a, b), (b, c), (c, a)):
        # x_i y_j - x_j y_i
        xi, yi, xj, yj = 2 * i, 2 * i + 1, 2 * j, 2 * j + 1
        quad[xi, yj] += 0.5
        quad[yj, xi] += 0.5
        quad[xj, yi] -= 0.5
        quad[yi, xj] -= 0.5
    return QuadraticConstraint(quad, np.zeros(size), -float(target), ConstraintKind.VOLUME2D, tuple(tri))


# ---------------------------------------------------------------------------
# primitives


def _vector(system: ConstraintSystem, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (system.size,):
        raise DimensionError(f"expected a vector of length {system.size}, got shape {x.shape}")
    return x


def evaluate(system: ConstraintSystem, x) -> np.ndarray:
    """Residual vector ``g(x)``."""
    return system.qmap.evaluate(_vector(system, x))


def rigidity_matrix(system: ConstraintSystem, x) -> np.ndarray:
    """Jacobian of ``g`` at ``x`` (unscaled convention, see module docstring)."""
    return system.qmap.jacobian(_vector(system, x))


def hessian_form(system: ConstraintSystem, v) -> np.ndarray:
    """Component ``i`` is ``v^T A_i v``; ``g(x+v) = g(x) + R(x) v + hessian_form(v)`` exactly."""
    return system.qmap.hessian_form(_vector(system, v))


def residual_norm(system: ConstraintSystem, x) -> float:
    return float(np.linalg.norm(evaluate(system, x)))


def pairwise_distances(system: ConstraintSystem, x) -> np.ndarray:
    """Condensed vector of all pairwise distances between point vertices."""
    pts = system.points(x)
    idx = [j for j in range(system.n_vertices) if j not in system.directions]
    pts = pts[idx]
    i, j = np.triu_indices(len(idx), k=1)
    return np.linalg.norm(pts[i] - pts[j], axis=1)


def congruent(system: ConstraintSystem, x, y, tol: float = 1e-4) -> bool:
    """Equal pairwise distances up to ``tol`` (the classical congruence test)."""
    return bool(np.all(np.abs(pairwise_distances(system, x) - pairwise_distances(system, y)) <= tol))


def make_system(dim: int, coords, constraints: Iterable[QuadraticConstraint], pinned: Iterable[int] = (),
                trivial_kind: TrivialKind = TrivialKind.EUCLIDEAN, directions: Iterable[int] = ()) -> ConstraintSystem:
    """Assemble a system, appending ``dim`` pin constraints per pinned vertex."""
    coords = np.asarray(coords, dtype=float)
    n = coords.shape[0]
    if coords.shape != (n, dim):
        raise DimensionError(f"coordinates must have shape (n, {dim})")
    pinned = sorted(set(int(i) for i in pinned))
    cons = list(constraints)
    for j in pinned:
        cons.extend(pin_constraints(dim, n, j, coords[j]))
    return ConstraintSystem(dim, n, coords.reshape(-1), tuple(cons), frozenset(pinned), trivial_kind,
                            frozenset(directions))
