"""First- and second-order rigidity analysis."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .constraints import ConstraintKind, ConstraintSystem, TrivialKind, rigidity_matrix

RANK_TOL = 1e-10
BLOCK_TOL = 1e-8
Q_ZERO_TOL = 1e-10


class SecondOrderStatus(str, enum.Enum):
    SECOND_ORDER_RIGID = "SecondOrderRigid"
    FLEXIBLE_WITNESS = "FlexibleWitness"
    UNKNOWN = "Unknown"


@dataclass(frozen=True, eq=False)
class RigidityReport:
    """Rank data and kernel/cokernel bases of the rigidity matrix at one point.

    All bases have orthonormal columns.
    """

    rank: int
    trivial_dim: int
    flex_basis: np.ndarray
    nontrivial_flex_basis: np.ndarray
    stress_basis: np.ndarray
    inf_rigid: bool
    affine_span_dim: int
    trivial_basis: np.ndarray
    singular_values: np.ndarray
    rank_tol: float = RANK_TOL

    @property
    def n_flexes(self) -> int:
        return self.flex_basis.shape[1]

    @property
    def n_nontrivial(self) -> int:
        return self.nontrivial_flex_basis.shape[1]

    @property
    def n_stresses(self) -> int:
        return self.stress_basis.shape[1]

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "trivial_dim": self.trivial_dim,
            "flex_dim": self.n_flexes,
            "nontrivial_flex_dim": self.n_nontrivial,
            "stress_dim": self.n_stresses,
            "inf_rigid": self.inf_rigid,
            "affine_span_dim": self.affine_span_dim,
            "nontrivial_flex_basis": self.nontrivial_flex_basis.T.tolist(),
            "stress_basis": self.stress_basis.T.tolist(),
        }


@dataclass(frozen=True, eq=False)
class SecondOrderVerdict:
    status: SecondOrderStatus
    witness_flex: Optional[np.ndarray]
    q_coeffs: np.ndarray


# ---------------------------------------------------------------------------
# linear algebra helpers


def numerical_rank(sv: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    """Number of singular values above ``rank_tol * sigma_max``."""
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rank_tol * sv[0]))


def matrix_rank(mat: np.ndarray, rank_tol: float = RANK_TOL) -> int:
    if mat.size == 0:
        return 0
    return numerical_rank(np.linalg.svd(mat, compute_uv=False), rank_tol)


def orthonormal_span(mat: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column space of ``mat``."""
    if mat.shape[1] == 0:
        return np.zeros((mat.shape[0], 0))
    u, sv, _ = np.linalg.svd(mat, full_matrices=False)
    return u[:, : numerical_rank(sv, rank_tol)]


def null_space(mat: np.ndarray, rank_tol: float = RANK_TOL) -> np.ndarray:
    n = mat.shape[1]
    if mat.shape[0] == 0:
        return np.eye(n)
    _, sv, vt = np.linalg.svd(mat, full_matrices=True)
    return vt[numerical_rank(sv, rank_tol):].T.copy()


# ---------------------------------------------------------------------------
# trivial motions


def affine_span_dim(system: ConstraintSystem, x=None) -> int:
    pts = system.points(x)
    idx = [j for j in range(system.n_vertices) if j not in system.directions]
    if len(idx) <= 1:
        return 0
    diffs = pts[idx[1:]] - pts[idx[0]]
    return matrix_rank(diffs, 1e-10)


def _skew_basis(d: int) -> list[np.ndarray]:
    out = []
    for i, j in itertools.combinations(range(d), 2):
        s = np.zeros((d, d))
        s[i, j], s[j, i] = 1.0, -1.0
        out.append(s)
    return out


def _trace_free_basis(d: int) -> list[np.ndarray]:
    out = []
    for i in range(d):
        for j in range(d):
            if i == j and i == d - 1:
                continue
            m = np.zeros((d, d))
            m[i, j] = 1.0
            if i == j:
                m[d - 1, d - 1] = -1.0
            out.append(m)
    return out


def trivial_generators(system: ConstraintSystem, x=None) -> np.ndarray:
    """Raw (non-orthonormal) generators of the trivial infinitesimal motions.

    Translations act on point vertices only; linear parts act on all vertices
    (direction vertices rotate with the body).
    """
    d, n = system.dim, system.n_vertices
    pts = system.points(x)
    if system.trivial_kind is TrivialKind.PINS_ONLY:
        return np.zeros((system.size, 0))
    if system.trivial_kind is TrivialKind.VOLUME_PRESERVING:
        linear = _trace_free_basis(d)
    else:
        linear = _skew_basis(d)
    cols = []
    for i in range(d):
        t = np.zeros((n, d))
        for j in range(n):
            if j not in system.directions:
                t[j, i] = 1.0
        cols.append(t.reshape(-1))
    for mat in linear:
        cols.append((pts @ mat.T).reshape(-1))
    return np.column_stack(cols)


def trivial_flex_basis(system: ConstraintSystem, x=None, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Orthonormal basis of trivial flexes, intersected with the pin null space."""
    span = orthonormal_span(trivial_generators(system, x), rank_tol)
    pin_idx = [i for i, c in enumerate(system.constraints) if c.kind is ConstraintKind.PIN]
    if pin_idx and span.shape[1]:
        pin_rows = np.stack([system.constraints[i].lin for i in pin_idx])
        # exact intersection: combinations of generators annihilated by the pins
        coeffs = null_space(pin_rows @ span, 1e-8)
        span = span @ coeffs
        if span.shape[1]:
            span = orthonormal_span(span, rank_tol)
    return span


# ---------------------------------------------------------------------------
# first order


def analyze(system: ConstraintSystem, rank_tol: float = RANK_TOL, x=None) -> RigidityReport:
    """SVD-based rank, flexes and stresses of the rigidity matrix.

    Singular values below ``rank_tol * sigma_max`` count as zero.
    """
    x = system.realization if x is None else np.asarray(x, dtype=float)
    mat = rigidity_matrix(system, x)
    m, size = mat.shape
    if m == 0:
        sv = np.zeros(0)
        u, vt = np.zeros((0, 0)), np.eye(size)
    else:
        u, sv, vt = np.linalg.svd(mat, full_matrices=True)
    rank = numerical_rank(sv, rank_tol)
    flex = vt[rank:].T.copy()
    stress = u[:, rank:].copy()
    triv = trivial_flex_basis(system, x, rank_tol)
    t = triv.shape[1]
    k = flex.shape[1]
    if k > t:
        resid = flex - triv @ (triv.T @ flex)
        uu, _, _ = np.linalg.svd(resid, full_matrices=False)
        nontrivial = uu[:, : k - t].copy()
    else:
        nontrivial = np.zeros((size, 0))
    return RigidityReport(
        rank=rank,
        trivial_dim=t,
        flex_basis=flex,
        nontrivial_flex_basis=nontrivial,
        stress_basis=stress,
        inf_rigid=rank == size - t,
        affine_span_dim=affine_span_dim(system, x),
        trivial_basis=triv,
        singular_values=sv,
        rank_tol=rank_tol,
    )


# ---------------------------------------------------------------------------
# second order


def _stressed_quads(system: ConstraintSystem, report: RigidityReport) -> np.ndarray:
    """``sum_l omega_l A_l`` for every stress column, shape (s, N, N)."""
    return np.einsum("ls,lij->sij", report.stress_basis, system.qmap.quad)


def is_blocked(system: ConstraintSystem, report: RigidityReport, v, tol: float = BLOCK_TOL) -> bool:
    """True iff some equilibrium stress pairs nontrivially with ``2 v^T A v``.

    ``v`` is rescaled to unit norm first so the verdict is scale invariant.
    """
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v)
    if nv == 0.0 or report.n_stresses == 0:
        return False
    v = v / nv
    off = v - report.flex_basis @ (report.flex_basis.T @ v)
    if np.linalg.norm(off) > 1e-8:
        raise ValueError("vector is not an infinitesimal flex")
    vals = 2.0 * report.stress_basis.T @ system.qmap.hessian_form(v)
    return bool(np.any(np.abs(vals) > tol * 2.0))


def q_system(system: ConstraintSystem, report: RigidityReport) -> np.ndarray:
    """Tensor ``Q[i, j, k] = omega_i^T B(f_j, f_k)`` over stresses and nontrivial flexes.

    ``B`` polarizes ``2 * hessian_form``; the result is symmetric in ``(j, k)``.
    Empty with shape ``(s, r, r)`` when either count is zero.
    """
    s, r = report.n_stresses, report.n_nontrivial
    if s == 0 or r == 0:
        return np.zeros((s, r, r))
    f = report.nontrivial_flex_basis
    q = 2.0 * np.einsum("ja,sjk,kb->sab", f, _stressed_quads(system, report), f)
    return 0.5 * (q + q.transpose(0, 2, 1))


def second_order_verdict(system: ConstraintSystem, report: RigidityReport, restarts: int = 64,
                         seed: int = 0) -> SecondOrderVerdict:
    from .flexes import find_unblocked_flex

    r = report.n_nontrivial
    q = q_system(system, report)
    if r == 0:
        return SecondOrderVerdict(SecondOrderStatus.SECOND_ORDER_RIGID, None, q)
    if report.n_stresses == 0:
        return SecondOrderVerdict(SecondOrderStatus.FLEXIBLE_WITNESS,
                                  report.nontrivial_flex_basis[:, 0].copy(), q)
    if r == 1:
        if np.all(np.abs(q) <= Q_ZERO_TOL):
            return SecondOrderVerdict(SecondOrderStatus.FLEXIBLE_WITNESS,
                                      report.nontrivial_flex_basis[:, 0].copy(), q)
        return SecondOrderVerdict(SecondOrderStatus.SECOND_ORDER_RIGID, None, q)
    choice = find_unblocked_flex(system, report, restarts=restarts, seed=seed)
    if choice is None:
        return SecondOrderVerdict(SecondOrderStatus.UNKNOWN, None, q)
    return SecondOrderVerdict(SecondOrderStatus.FLEXIBLE_WITNESS, choice.flex, q)
