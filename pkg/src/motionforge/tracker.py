"""Discretized continuous motions: iterated retraction with unit-speed steps.

Each step retracts ``x_k + alpha v_k`` onto the constraint set, rescales
``alpha`` so every step covers roughly the same arc length, transports the
tangent to the new point and watches the rank of the rigidity matrix.
Singular points are passed with a quadratic predictor (nodes) or by
switching to the opposite branch (cusps).
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .constraints import ConstraintSystem, residual_norm, rigidity_matrix
from .flexes import FlexChoice
from .retraction import (
    ComponentEscape,
    PathFailure,
    RandomizationError,
    RetractionResult,
    TrackerConfig,
    gauss_newton,
    retract,
)
from .rigidity import RigidityReport, analyze, numerical_rank

log = logging.getLogger(__name__)

FEASIBLE = 1e-8
APPROACH_TOL = 1e-4
ZERO_LENGTH = 1e-12


class EventKind(str, enum.Enum):
    RANK_DROP = "RankDrop"
    QUADRATIC_ESCAPE = "QuadraticEscape"
    CUSP_FALLBACK = "CuspFallback"
    STICKY_CONTACT = "StickyContact"


class RankChange(ValueError):
    pass


class NoAcceleration(ValueError):
    pass


class StuckAtSingularity(RuntimeError):
    pass


@dataclass(frozen=True)
class PathEvent:
    step: int
    kind: EventKind
    detail: str = ""

    def to_dict(self) -> dict:
        return {"step": self.step, "kind": self.kind.value, "detail": self.detail}


@dataclass
class DeformationPath:
    system: ConstraintSystem
    realizations: list[np.ndarray]
    tangents: list[np.ndarray]
    step_sizes: list[float]
    curve_lengths: list[float]
    events: list[PathEvent]
    residual_log: list[float]
    error: Optional[str] = None
    final_system: Optional[ConstraintSystem] = None

    @classmethod
    def start(cls, system: ConstraintSystem, x: np.ndarray, v: Optional[np.ndarray] = None) -> "DeformationPath":
        tangents = [] if v is None else [np.asarray(v, dtype=float).copy()]
        return cls(system, [np.asarray(x, dtype=float).copy()], tangents, [], [], [],
                   [residual_norm(system, x)])

    def append(self, x, v, alpha: float, length: float, residual: float):
        self.realizations.append(np.asarray(x, dtype=float).copy())
        self.tangents.append(np.asarray(v, dtype=float).copy())
        self.step_sizes.append(float(alpha))
        self.curve_lengths.append(float(length))
        self.residual_log.append(float(residual))

    def log_event(self, kind: EventKind, detail: str = ""):
        self.events.append(PathEvent(len(self.realizations) - 1, kind, detail))

    @property
    def truncated(self) -> bool:
        return self.error is not None

    def event_steps(self, kinds=None) -> set[int]:
        return {e.step for e in self.events if kinds is None or e.kind in kinds}


# ---------------------------------------------------------------------------
# building blocks


def transport(t_prev: np.ndarray, t_next: np.ndarray, v_prev: np.ndarray) -> np.ndarray:
    """Move ``v_prev`` into ``span(t_next)`` by the best-aligning orthogonal map.

    ``O = U V^T`` from the SVD ``t_next^T t_prev = U S V^T`` and the result
    ``t_next O t_prev^T v_prev`` is rescaled to the norm of ``v_prev``.
    """
    if t_prev.shape != t_next.shape:
        raise RankChange(f"tangent dimension changed from {t_prev.shape[1]} to {t_next.shape[1]}")
    for basis in (t_prev, t_next):
        if np.linalg.norm(basis.T @ basis - np.eye(basis.shape[1])) > 1e-8:
            raise ValueError("tangent bases must have orthonormal columns")
    u, _, vt = np.linalg.svd(t_next.T @ t_prev)
    out = t_next @ ((u @ vt) @ (t_prev.T @ v_prev))
    norm = np.linalg.norm(out)
    if norm == 0.0:
        return out
    return out * (np.linalg.norm(v_prev) / norm)


def rank_at(system: ConstraintSystem, x, rank_tol: float) -> int:
    return numerical_rank(np.linalg.svd(rigidity_matrix(system, x), compute_uv=False), rank_tol)


def detect_singularity(system: ConstraintSystem, x, reference_rank: int, rank_tol: float = 1e-10) -> bool:
    """True iff the rigidity matrix at ``x`` has rank below ``reference_rank``."""
    return rank_at(system, x, rank_tol) < reference_rank


def solve_stacked(rows: np.ndarray, basis: np.ndarray, rhs: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Minimum-norm least-squares solution of ``[rows; basis^T] a = [rhs; 0]``.

    Raises ``NoAcceleration`` when the system is inconsistent beyond ``tol``
    (relative to the right-hand side scale).
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    basis = np.asarray(basis, dtype=float).reshape(rows.shape[1], -1)
    rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
    mat = np.vstack([rows, basis.T])
    full = np.concatenate([rhs, np.zeros(basis.shape[1])])
    a = np.linalg.lstsq(mat, full, rcond=1e-12)[0]
    if np.linalg.norm(mat @ a - full) > tol * (1.0 + np.linalg.norm(full)):
        raise NoAcceleration("second-order equation has no solution at this point")
    return a


def acceleration(system: ConstraintSystem, x, v, basis: Optional[np.ndarray] = None) -> np.ndarray:
    """Normal acceleration ``a`` with ``R(x) a = -2 hessian_form(v)`` and ``a`` orthogonal to the tangent space."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if basis is None:
        basis = analyze(system, x=x).flex_basis
    rows = rigidity_matrix(system, x)
    if np.linalg.norm(rows @ v) > 1e-6 * (1.0 + np.linalg.norm(rows)) * max(1.0, np.linalg.norm(v)):
        raise ValueError("velocity is not tangent")
    return solve_stacked(rows, basis, -2.0 * system.qmap.hessian_form(v))


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def _tangent_from_direction(basis: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """Projection of ``direction`` onto ``span(basis)``, unit length."""
    return _unit(basis @ (basis.T @ direction))


# ---------------------------------------------------------------------------
# singularities


@dataclass
class _Regular:
    """Cached data at the last regular point."""

    x: np.ndarray
    v: np.ndarray
    a: Optional[np.ndarray]
    basis: np.ndarray
    rank: int


@dataclass
class Resolution:
    x: np.ndarray
    kind: EventKind
    singular_point: np.ndarray
    approach: list[np.ndarray] = field(default_factory=list)


def _project(system: ConstraintSystem, x0: np.ndarray, anchor: Optional[np.ndarray] = None,
             normal: Optional[np.ndarray] = None, tol: float = 1e-12) -> Optional[np.ndarray]:
    """Gauss-Newton onto ``g = 0``, optionally inside the hyperplane ``normal . (x - anchor) = 0``."""
    qm = system.qmap
    if normal is None:
        res, jac = qm.evaluate, qm.jacobian
    else:
        def res(x):
            return np.append(qm.evaluate(x), normal @ (x - anchor))

        def jac(x):
            return np.vstack([qm.jacobian(x), normal])
    out = gauss_newton(res, jac, x0, tol, max_iter=60, require_contraction=False)
    if not np.all(np.isfinite(out.z)) or residual_norm(system, out.z) > 1e-10:
        return None
    return out.z


def _approach(system: ConstraintSystem, reg: _Regular, step: float, config: TrackerConfig,
              seed: int) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """Walk toward the singularity with halving steps until they fall below ``APPROACH_TOL``."""
    y, v, basis, rank = reg.x, reg.v, reg.basis, reg.rank
    h = step / 2.0
    visited = []
    for _ in range(200):
        if h < APPROACH_TOL:
            break
        try:
            res = retract(system, y, v, h, config, seed)
            ok = res.curve_length > ZERO_LENGTH and res.final_residual <= FEASIBLE
        except (PathFailure, ComponentEscape, RandomizationError):
            ok = False
        if ok:
            z = res.endpoint
            rep = analyze(system, config.rank_tol, x=z)
            if rep.rank < rank:
                return z, v, visited
            if rep.n_nontrivial == basis.shape[1] and np.dot(_unit(z - y), v) > 0.5:
                v = _unit(transport(basis, rep.nontrivial_flex_basis, v))
                y, basis = z, rep.nontrivial_flex_basis
                visited.append(z)
                continue
        h /= 2.0
    return y, v, visited


def resolve_singularity(system: ConstraintSystem, reg: _Regular, step: float, config: TrackerConfig,
                        seed: int = 0, singular_point: Optional[np.ndarray] = None) -> Resolution:
    """Continue past a singular point reached from the regular data ``reg``.

    The singular point is approached with shrinking steps, then a quadratic
    predictor ``x_s + h v + h^2 a / 2`` is corrected onto the constraint set
    (straight through a node).  If that only returns to the incoming branch,
    the cached acceleration is used to jump to the opposite side of the
    incoming branch (cusp).
    """
    if reg.a is None:
        raise StuckAtSingularity("no acceleration cached at the last regular point")
    if singular_point is None:
        x_s, v_in, visited = _approach(system, reg, step, config, seed)
    else:
        x_s, v_in, visited = singular_point, reg.v, []
    last = visited[-1] if visited else reg.x
    if np.array_equal(x_s, last):
        last = visited[-2] if len(visited) > 1 else reg.x
    chord_in = _unit(x_s - last)
    if not np.any(chord_in):
        chord_in = v_in
    eps_progress = 10.0 * np.sqrt(config.corrector_tol) * step
    a = reg.a

    for h in (step, step / 2.0, step / 4.0):
        pred = x_s + h * v_in + 0.5 * h * h * a
        x_new = _project(system, pred, anchor=pred, normal=v_in)
        if x_new is None:
            x_new = _project(system, pred)
        if x_new is None:
            continue
        out = x_new - x_s
        # a genuine continuation lands near the prediction; a far landing means
        # the predictor left the variety and was pulled back
        near = np.linalg.norm(x_new - pred) <= 0.25 * h
        if (near and np.linalg.norm(out) >= eps_progress and np.dot(_unit(out), -chord_in) < 0.99
                and np.dot(out, v_in) > 0):
            return Resolution(x_new, EventKind.QUADRATIC_ESCAPE, x_s, visited)

    # cusp: from the last regular point, step across the incoming branch.
    # The acceleration of the incoming branch points away from the other
    # branch, so the reversed direction is tried first.
    a_hat = _unit(a)
    base = reg.x
    h = step
    while h >= APPROACH_TOL:
        for sign in (-1.0, 1.0):
            pred = base + sign * h * a_hat
            for x_new in (_project(system, pred, anchor=pred, normal=v_in), _project(system, pred)):
                if x_new is None:
                    continue
                side = sign * np.dot(x_new - base, a_hat)
                if (side > eps_progress and np.linalg.norm(x_new - base) > eps_progress
                        and np.linalg.norm(x_new - x_s) > eps_progress):
                    return Resolution(x_new, EventKind.CUSP_FALLBACK, x_s, visited)
        h /= 2.0
    raise StuckAtSingularity("could not continue past the singular point")


# ---------------------------------------------------------------------------
# main loop


StickyHook = Callable[[ConstraintSystem, np.ndarray], Optional[ConstraintSystem]]


def _regular_data(system: ConstraintSystem, x: np.ndarray, v: np.ndarray, config: TrackerConfig,
                  report: Optional[RigidityReport] = None) -> _Regular:
    if report is None:
        report = analyze(system, config.rank_tol, x=x)
    try:
        a = acceleration(system, x, v, report.flex_basis)
    except (NoAcceleration, ValueError):
        a = None
    return _Regular(x.copy(), v.copy(), a, report.nontrivial_flex_basis, report.rank)


def _try_retract(system, x, v, alpha, config, seed, report) -> Optional[RetractionResult]:
    try:
        res = retract(system, x, v, alpha, config, seed, report)
    except (PathFailure, ComponentEscape, RandomizationError) as exc:
        log.debug("retraction failed: %s", exc)
        return None
    if res.final_residual > FEASIBLE or res.curve_length < ZERO_LENGTH:
        return None
    return res


def _escape_singular_start(system: ConstraintSystem, x: np.ndarray, v: np.ndarray, step: float,
                           report: RigidityReport, config: TrackerConfig, seed: int) -> Optional[np.ndarray]:
    """Leave a singular start point along ``v`` when plain retraction cannot.

    The prediction ``x + h v`` is corrected inside the hyperplane orthogonal
    to ``v``, starting from a small seeded offset along the remaining flex
    directions so a symmetric split of branches is broken.
    """
    basis = report.nontrivial_flex_basis
    others = basis - np.outer(v, v @ basis)
    rng = np.random.default_rng(seed)
    h = step
    while h >= APPROACH_TOL:
        pred = x + h * v
        for _ in range(4):
            offset = others @ rng.standard_normal(basis.shape[1])
            offset = _unit(offset) * h ** 1.5
            x_new = _project(system, pred + offset, anchor=pred, normal=v)
            if x_new is not None and np.linalg.norm(x_new - x) > 0.5 * h:
                return x_new
        h /= 2.0
    return None


def track_path(system: ConstraintSystem, flex_choice: FlexChoice, num_steps: int, step_size: float,
               config: TrackerConfig = TrackerConfig(), seed: int = 0,
               sticky: Optional[StickyHook] = None) -> DeformationPath:
    """Approximate a continuous motion starting along ``flex_choice.flex``.

    Returns the path computed so far; on an unrecoverable failure the path is
    truncated and ``path.error`` describes why.
    """
    x = system.realization.copy()
    v = _unit(np.asarray(flex_choice.flex, dtype=float))
    path = DeformationPath.start(system, x, v)
    if num_steps <= 0:
        return path
    report = analyze(system, config.rank_tol, x=x)
    if report.n_nontrivial == 0:
        path.error = "no nontrivial flex"
        return path
    reg = _regular_data(system, x, v, config, report)
    alpha = step_size
    target_length = None
    max_rank = report.rank

    for k in range(1, num_steps + 1):
        try:
            step = _advance(system, reg, report, alpha, target_length, config, seed, k == 1)
        except StuckAtSingularity as exc:
            path.error = str(exc)
            break
        if step is None:
            path.error = f"retraction failed at step {k}"
            break
        x_new, alpha_used, length, event = step
        if event is not None:
            singular_point, kind = event
            path.events.append(PathEvent(k, EventKind.RANK_DROP, "singular point reached"))
            path.events.append(PathEvent(k, kind, ""))
            chord = x_new - singular_point
        else:
            chord = x_new - reg.x
        if target_length is None and event is None:
            target_length = length

        new_report = analyze(system, config.rank_tol, x=x_new)
        if event is None and new_report.rank < max_rank:
            # landed exactly on a lower-rank point: resolve from here
            try:
                res = resolve_singularity(system, reg, alpha_used, config, seed, singular_point=x_new)
            except StuckAtSingularity as exc:
                path.error = str(exc)
                break
            path.events.append(PathEvent(k, EventKind.RANK_DROP, "rank dropped at accepted point"))
            path.events.append(PathEvent(k, res.kind, ""))
            chord = res.x - x_new
            x_new = res.x
            length = float(np.linalg.norm(chord))
            new_report = analyze(system, config.rank_tol, x=x_new)

        basis = new_report.nontrivial_flex_basis
        if event is None and basis.shape == reg.basis.shape:
            v_new = _unit(transport(reg.basis, basis, reg.v))
            if np.dot(v_new, chord) < 0:
                v_new = -v_new
        else:
            v_new = _tangent_from_direction(basis, chord)

        if sticky is not None:
            grown = sticky(system, x_new)
            if grown is not None:
                system = grown
                x_new = system.realization.copy()
                new_report = analyze(system, config.rank_tol, x=x_new)
                basis = new_report.nontrivial_flex_basis
                path.events.append(PathEvent(k, EventKind.STICKY_CONTACT, ""))
                path.final_system = system
                if basis.shape[1] == 0:
                    path.append(x_new, v_new, alpha_used, length, residual_norm(system, x_new))
                    path.error = "contact made the system rigid"
                    break
                v_new = _tangent_from_direction(basis, v_new)
                if not np.any(v_new):
                    v_new = _tangent_from_direction(basis, chord)

        path.append(x_new, v_new, alpha_used, length, residual_norm(system, x_new))
        if new_report.rank > max_rank:
            max_rank = new_report.rank
        report = new_report
        reg = _regular_data(system, x_new, v_new, config, report)
        alpha = alpha_used
    if path.final_system is None and system is not path.system:
        path.final_system = system
    return path


def _advance(system, reg: _Regular, report: RigidityReport, alpha: float, target_length: Optional[float],
             config: TrackerConfig, seed: int, at_start: bool):
    """One unit-speed step; returns ``(x, alpha, length, event)`` or ``None``."""
    look = _try_retract(system, reg.x, reg.v, alpha, config, seed, report)
    if look is None:
        if at_start:
            return _start_escape(system, reg, report, alpha, config, seed)
        res = resolve_singularity(system, reg, alpha, config, seed)
        return res.x, alpha, float(np.linalg.norm(res.x - res.singular_point)), (res.singular_point, res.kind)
    if target_length is None:
        return look.endpoint, alpha, look.curve_length, None
    scaled = alpha * target_length / look.curve_length
    scaled = float(np.clip(scaled, 0.2 * alpha, 5.0 * alpha))
    if abs(scaled / alpha - 1.0) < 1e-3:
        return look.endpoint, alpha, look.curve_length, None
    res = _try_retract(system, reg.x, reg.v, scaled, config, seed, report)
    if res is None:
        return look.endpoint, alpha, look.curve_length, None
    return res.endpoint, scaled, res.curve_length, None


def _start_escape(system, reg: _Regular, report: RigidityReport, alpha, config, seed):
    """Leave the start point when it is singular and plain retraction fails.

    Both orientations of the flex are tried, the given one first.
    """
    for sign in (1.0, -1.0):
        v = sign * reg.v
        x_new = _escape_singular_start(system, reg.x, v, alpha, report, config, seed)
        if x_new is not None:
            return x_new, alpha, float(np.linalg.norm(x_new - reg.x)), (reg.x, EventKind.QUADRATIC_ESCAPE)
    return None
