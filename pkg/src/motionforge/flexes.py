"""Choosing an initial nontrivial flex."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .constraints import ConstraintSystem
from .retraction import gauss_newton
from .rigidity import RigidityReport, q_system

Q_ACCEPT_TOL = 1e-10


class FlexSource(str, enum.Enum):
    USER_COEFFICIENTS = "UserCoefficients"
    SOLVED_UNBLOCKED = "SolvedUnblocked"
    SOLE_FLEX = "SoleFlex"


class RigidSystemError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FlexChoice:
    coefficients: np.ndarray
    flex: np.ndarray
    source: FlexSource


def _combine(report: RigidityReport, coeffs: np.ndarray) -> np.ndarray:
    flex = report.nontrivial_flex_basis @ coeffs
    return flex / np.linalg.norm(flex)


def select_flex(report: RigidityReport, coefficients: Sequence[float]) -> FlexChoice:
    """Unit-norm combination of the nontrivial flex basis with given coefficients."""
    r = report.n_nontrivial
    if r == 0:
        raise RigidSystemError("system is infinitesimally rigid")
    coeffs = np.asarray(coefficients, dtype=float).reshape(-1)
    if coeffs.shape != (r,):
        raise ValueError(f"expected {r} flex coefficients, got {coeffs.size}")
    if not np.any(coeffs):
        raise ValueError("flex coefficients are all zero")
    coeffs = coeffs / np.linalg.norm(coeffs)
    return FlexChoice(coeffs, _combine(report, coeffs), FlexSource.USER_COEFFICIENTS)


def canonical_sign(vec: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Flip ``vec`` so its first entry with magnitude above ``tol`` is positive."""
    nz = np.flatnonzero(np.abs(vec) > tol)
    if nz.size and vec[nz[0]] < 0:
        return -vec
    return vec


def find_unblocked_flex(system: ConstraintSystem, report: RigidityReport, restarts: int = 64,
                        seed: int = 0) -> Optional[FlexChoice]:
    """Search for ``lam`` on the unit sphere with ``Q_i(lam) = 0`` for every stress.

    Seeded random restarts of damped Gauss-Newton on the residual
    ``[Q_1(lam), ..., Q_s(lam), 1 - |lam|^2]``.  The lowest successful
    restart index wins.  Returns ``None`` when the budget is exhausted.
    """
    r = report.n_nontrivial
    if r == 0:
        raise RigidSystemError("system is infinitesimally rigid")
    if report.n_stresses == 0:
        coeffs = np.zeros(r)
        coeffs[0] = 1.0
        return FlexChoice(coeffs, report.nontrivial_flex_basis[:, 0].copy(), FlexSource.SOLE_FLEX)
    q = q_system(system, report)

    def residual(lam):
        return np.append(np.einsum("sjk,j,k->s", q, lam, lam), 1.0 - lam @ lam)

    def jacobian(lam):
        return np.vstack([2.0 * np.einsum("sjk,k->sj", q, lam), -2.0 * lam])

    rng = np.random.default_rng(seed)
    for _ in range(restarts):
        start = rng.standard_normal(r)
        start /= np.linalg.norm(start)
        out = gauss_newton(residual, jacobian, start, tol=0.0, max_iter=60, require_contraction=False)
        lam = out.z
        if np.max(np.abs(residual(lam))) <= Q_ACCEPT_TOL:
            lam = canonical_sign(lam / np.linalg.norm(lam))
            return FlexChoice(lam, _combine(report, lam), FlexSource.SOLVED_UNBLOCKED)
    return None
