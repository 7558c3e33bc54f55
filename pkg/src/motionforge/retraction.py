"""Closest-point retraction onto a constraint variety by parameter continuation.

For a base point ``p`` and tangent ``v`` the retraction is the point of
``{g = 0}`` nearest to ``u = p + v``.  It is computed by tracking the critical
points of ``0.5 * ||x - u(t)||^2 + lambda^T g(x)`` along ``u(t) = p + t v``,
starting from the known solution ``(p, 0)`` at ``t = 0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .constraints import ConstraintSystem, QuadraticMap, residual_norm
from .rigidity import RANK_TOL, RigidityReport, analyze, matrix_rank

log = logging.getLogger(__name__)


class PathFailure(RuntimeError):
    """Continuation could not reach the end of the parameter path."""

    def __init__(self, message: str, last_x: Optional[np.ndarray] = None, t: float = 0.0):
        super().__init__(message)
        self.last_x = last_x
        self.t = t


class ComponentEscape(RuntimeError):
    """A point tracked on the randomized system does not satisfy the original one."""


class RandomizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    corrector_tol: float = 1e-10
    max_newton_iters: int = 50
    armijo_shrink: float = 0.5
    armijo_slope: float = 0.5
    t_step_init: float = 0.1
    t_step_min: float = 1e-6
    t_step_grow: float = 1.25
    t_step_shrink: float = 0.5
    max_corrector_failures: int = 40
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        for name in ("corrector_tol", "max_newton_iters", "armijo_shrink", "armijo_slope", "t_step_init",
                     "t_step_min", "t_step_grow", "t_step_shrink", "max_corrector_failures", "rank_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not self.armijo_shrink < 1 or not self.t_step_shrink < 1 < self.t_step_grow:
            raise ValueError("shrink factors must be < 1 and the growth factor > 1")


@dataclass
class LagrangeState:
    x: np.ndarray
    lam: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam])

    @classmethod
    def split(cls, z: np.ndarray, size: int) -> "LagrangeState":
        return cls(z[:size].copy(), z[size:].copy())


@dataclass
class RetractionResult:
    endpoint: np.ndarray
    polyline: list[np.ndarray]
    curve_length: float
    randomized: bool
    final_residual: float
    t_steps_used: int
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))


View = Union[ConstraintSystem, QuadraticMap]


def _qmap(view: View) -> QuadraticMap:
    return view.qmap if isinstance(view, ConstraintSystem) else view


# ---------------------------------------------------------------------------
# damped Gauss-Newton


@dataclass
class GaussNewtonResult:
    z: np.ndarray
    iterations: int
    converged: bool
    residuals: list[float]


def gauss_newton(residual: Callable[[np.ndarray], np.ndarray], jacobian: Callable[[np.ndarray], np.ndarray],
                 z0: np.ndarray, tol: float, max_iter: int = 50, shrink: float = 0.5, slope: float = 0.5,
                 alpha_min: float = 1e-8, require_contraction: bool = True) -> GaussNewtonResult:
    """Damped Gauss-Newton with minimum-norm steps and Armijo backtracking.

    The step is ``-pinv(J) F``.  A damping ``alpha`` is accepted when
    ``||F(z + alpha step)|| <= ||F(z)|| (1 - slope * alpha * c)`` where
    ``c = ||P F||^2 / ||F||^2`` is the normalized descent rate and ``P`` the
    projector onto the range of ``J``.  Convergence requires ``||F|| <= tol``
    and, when any step was taken, a last-step contraction factor below 0.5
    (or a residual already at rounding level).
    """
    z = np.array(z0, dtype=float)
    f = residual(z)
    nf = float(np.linalg.norm(f))
    history = [nf]
    floor = 1e3 * np.finfo(float).eps * (1.0 + float(np.linalg.norm(z)))
    it = 0
    while True:
        if nf <= tol:
            contracted = (it == 0 or not require_contraction or history[-1] < 0.5 * history[-2]
                          or nf <= floor)
            return GaussNewtonResult(z, it, contracted, history)
        if it >= max_iter:
            return GaussNewtonResult(z, it, False, history)
        jac = jacobian(z)
        step = np.linalg.lstsq(jac, -f, rcond=1e-13)[0]
        proj = -(jac @ step)
        c = float(proj @ f) / (nf * nf)
        if not np.all(np.isfinite(step)) or c <= 1e-14:
            return GaussNewtonResult(z, it, False, history)
        alpha = 1.0
        while True:
            z_new = z + alpha * step
            f_new = residual(z_new)
            nf_new = float(np.linalg.norm(f_new))
            if nf_new <= nf * (1.0 - slope * alpha * min(c, 1.0)):
                break
            alpha *= shrink
            if alpha < alpha_min:
                return GaussNewtonResult(z, it, False, history)
        z, f, nf = z_new, f_new, nf_new
        history.append(nf)
        it += 1


def project_onto(view: View, x0: np.ndarray, tol: float = 1e-12, max_iter: int = 100) -> GaussNewtonResult:
    """Gauss-Newton on ``g(x) = 0`` alone (minimum-norm steps) starting at ``x0``."""
    qm = _qmap(view)
    return gauss_newton(qm.evaluate, qm.jacobian, x0, tol, max_iter, require_contraction=False)


# ---------------------------------------------------------------------------
# Lagrange system


def lagrange_residual(view: View, state: LagrangeState, u: np.ndarray) -> np.ndarray:
    """``[x - u + J(x)^T lam ; g(x)]``."""
    qm = _qmap(view)
    x = np.asarray(state.x, dtype=float)
    return np.concatenate([x - u + qm.jacobian(x).T @ state.lam, qm.evaluate(x)])


def lagrange_jacobian(view: View, state: LagrangeState) -> np.ndarray:
    qm = _qmap(view)
    size, m = qm.size, qm.n_rows
    jac = qm.jacobian(state.x)
    out = np.zeros((size + m, size + m))
    out[:size, :size] = np.eye(size) + qm.weighted_hessian(state.lam)
    out[:size, size:] = jac.T
    out[size:, :size] = jac
    return out


def _lagrange_fns(view: View, u: np.ndarray):
    qm = _qmap(view)
    size = qm.size

    def res(z):
        return lagrange_residual(qm, LagrangeState(z[:size], z[size:]), u)

    def jac(z):
        return lagrange_jacobian(qm, LagrangeState(z[:size], z[size:]))

    return res, jac


def newton_correct(view: View, state: LagrangeState, u: np.ndarray,
                   config: TrackerConfig = TrackerConfig()) -> tuple[LagrangeState, int, bool]:
    """Damped Gauss-Newton on the Lagrange residual for a fixed target ``u``."""
    res, jac = _lagrange_fns(view, np.asarray(u, dtype=float))
    out = gauss_newton(res, jac, state.stacked(), config.corrector_tol, config.max_newton_iters,
                       config.armijo_shrink, config.armijo_slope)
    return LagrangeState.split(out.z, _qmap(view).size), out.iterations, out.converged


# ---------------------------------------------------------------------------
# randomization


def randomize(system: ConstraintSystem, p=None, seed: int = 0, rank_tol: float = RANK_TOL,
              report: Optional[RigidityReport] = None, max_tries: int = 5) -> tuple[QuadraticMap, np.ndarray]:
    """Mix the constraints with a seeded Gaussian ``(m - k) x m`` matrix to remove stresses.

    ``k`` is the stress dimension at ``p``.  The mixed view must have no
    stresses and the same kernel dimension at ``p``; up to ``max_tries``
    fresh draws are attempted.
    """
    p = system.realization if p is None else np.asarray(p, dtype=float)
    if report is None:
        report = analyze(system, rank_tol, x=p)
    k = report.n_stresses
    m = system.n_constraints
    if k == 0:
        raise RandomizationError("randomization not needed: no equilibrium stresses")
    rows = m - k
    rng = np.random.default_rng(seed)
    base = system.qmap.jacobian(p)
    for _ in range(max_tries):
        mix = rng.standard_normal((rows, m))
        rank = matrix_rank(mix @ base, rank_tol)
        if rank == report.rank == rows:
            return system.qmap.combine(mix), mix
    raise RandomizationError(f"no stress-free randomization found in {max_tries} tries")


# ---------------------------------------------------------------------------
# retraction


def retract(system: ConstraintSystem, p, v, step_scale: float = 1.0, config: TrackerConfig = TrackerConfig(),
            seed: int = 0, report: Optional[RigidityReport] = None) -> RetractionResult:
    """Track the closest point of ``{g = 0}`` to ``u(t) = p + t * step_scale * v``, ``t`` from 0 to 1."""
    p = np.array(p, dtype=float)
    v = np.array(v, dtype=float)
    size = system.size
    if p.shape != (size,) or v.shape != (size,):
        raise ValueError(f"expected vectors of length {size}")
    if residual_norm(system, p) > 10 * max(config.corrector_tol, 1e-9):
        raise ValueError("base point is not on the constraint set")
    if report is None:
        report = analyze(system, config.rank_tol, x=p)
    jac0 = system.qmap.jacobian(p)
    vn = np.linalg.norm(v)
    if vn > 0 and np.linalg.norm(jac0 @ v) > 1e-6 * max(1.0, np.linalg.norm(jac0)) * vn:
        raise ValueError("direction is not tangent at the base point")
    direction = step_scale * v
    randomized = report.n_stresses > 0 and system.n_constraints > 0
    if randomized:
        view, mix = randomize(system, p, seed, config.rank_tol, report)
    else:
        view, mix = system.qmap, None
    lam = np.zeros(view.n_rows)
    if np.linalg.norm(direction) == 0.0:
        return RetractionResult(p.copy(), [p.copy()], 0.0, randomized, residual_norm(system, p), 0, lam)

    dF_dt = np.concatenate([-direction, np.zeros(view.n_rows)])
    z = np.concatenate([p, lam])
    t, dt = 0.0, config.t_step_init
    polyline = [p.copy()]
    failures = 0
    steps = 0
    while t < 1.0:
        dt = min(dt, 1.0 - t)
        state = LagrangeState.split(z, size)
        jac = lagrange_jacobian(view, state)
        dz = np.linalg.lstsq(jac, -dF_dt * dt, rcond=1e-13)[0]
        z_pred = z + dz
        t_new = 1.0 if t + dt >= 1.0 - 1e-15 else t + dt
        u = p + t_new * direction
        corrected, iters, ok = newton_correct(view, LagrangeState.split(z_pred, size), u, config)
        z_new = corrected.stacked()
        if ok and np.linalg.norm(z_new - z_pred) > 10.0 * np.linalg.norm(dz) + 1e-9:
            ok = False  # path jump
        if ok and mix is not None:
            ok_orig, corrected = _validate_original(system, corrected, mix, u, config)
            if not ok_orig:
                raise ComponentEscape(f"randomized track left the original solution set at t={t_new:.6g}")
            z_new = np.concatenate([corrected.x, z_new[size:]])
        if not ok:
            failures += 1
            dt *= config.t_step_shrink
            if dt < config.t_step_min or failures > config.max_corrector_failures:
                raise PathFailure(f"continuation stalled at t={t:.6g}", z[:size].copy(), t)
            continue
        z, t = z_new, t_new
        steps += 1
        polyline.append(z[:size].copy())
        if iters <= 3:
            dt *= config.t_step_grow
    x_end = z[:size].copy()
    length = float(sum(np.linalg.norm(b - a) for a, b in zip(polyline, polyline[1:])))
    return RetractionResult(x_end, polyline, length, randomized, residual_norm(system, x_end), steps, z[size:].copy())


def _validate_original(system: ConstraintSystem, state: LagrangeState, mix: np.ndarray, u: np.ndarray,
                       config: TrackerConfig) -> tuple[bool, LagrangeState]:
    if residual_norm(system, state.x) <= config.corrector_tol:
        return True, state
    orig = LagrangeState(state.x.copy(), mix.T @ state.lam)
    fixed, _, ok = newton_correct(system, orig, u, config)
    moved = np.linalg.norm(fixed.x - state.x)
    if not ok or residual_norm(system, fixed.x) > config.corrector_tol or moved > 1e-6 * (1 + np.linalg.norm(u)):
        return False, state
    return True, fixed
