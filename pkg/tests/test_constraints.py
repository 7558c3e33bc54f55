import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motionforge import catalog
from motionforge.constraints import (
    ConstraintKind,
    ConstraintSystem,
    DimensionError,
    InfeasibleRealization,
    QuadraticConstraint,
    TrivialKind,
    congruent,
    distance_constraint,
    evaluate,
    hessian_form,
    make_system,
    pin_constraints,
    residual_norm,
    rigidity_matrix,
    volume2d_constraint,
)

from conftest import random_framework


def test_k3_residual_zero_at_realization(k3):
    assert np.allclose(evaluate(k3, k3.realization), 0.0)


def test_k3_moved_vertex(k3):
    x = k3.realization.copy()
    x[4:6] = [2.0, 1.0]
    res = evaluate(k3, x)
    kinds = [c.vertices for c in k3.constraints]
    assert res[kinds.index((0, 2))] == pytest.approx(1.0)


def test_pin_residual():
    system = catalog.framework([(0, 1), (1, 2), (0, 2)], [[0, 0], [1, 0], [2, 0]], pins=[0])
    x = system.realization.copy()
    x[0] = 0.5
    res = evaluate(system, x)
    pins = [i for i, c in enumerate(system.constraints) if c.kind is ConstraintKind.PIN]
    assert res[pins[0]] == pytest.approx(0.5)
    assert res[pins[1]] == 0.0


def test_k3_rigidity_matrix_is_twice_half_scaled_matrix(k3):
    half = np.array([[-1, 0, 1, 0, 0, 0],
                     [0, 0, -1, 0, 1, 0],
                     [-2, 0, 0, 0, 2, 0]], dtype=float)
    order = {(0, 1): 0, (1, 2): 1, (0, 2): 2}
    jac = rigidity_matrix(k3, k3.realization)
    for row, c in zip(jac, k3.constraints):
        assert np.array_equal(row, 2 * half[order[c.vertices]])
    assert np.linalg.matrix_rank(jac) == 2


def test_pin_only_matrix_is_constant(rng):
    cons = pin_constraints(2, 3, 1, [0.3, -0.2])
    system = make_system(2, [[0, 0], [0.3, -0.2], [1, 1]], [], pinned=[1])
    a = rigidity_matrix(system, rng.standard_normal(6))
    b = rigidity_matrix(system, rng.standard_normal(6))
    assert np.array_equal(a, b)
    assert np.array_equal(a, np.array([c.lin for c in cons]))


def test_matrix_matches_finite_differences(rng):
    system = random_framework(rng, 4, 2)
    x = rng.standard_normal(system.size)
    jac = rigidity_matrix(system, x)
    h = 1e-6
    fd = np.empty_like(jac)
    for k in range(system.size):
        e = np.zeros(system.size)
        e[k] = h
        fd[:, k] = (evaluate(system, x + e) - evaluate(system, x - e)) / (2 * h)
    assert np.max(np.abs(fd - jac)) <= 1e-6


def test_hessian_form_matches_taylor(rng):
    system = random_framework(rng, 5, 3)
    x, v = rng.standard_normal((2, system.size))
    lhs = evaluate(system, x + v)
    rhs = evaluate(system, x) + rigidity_matrix(system, x) @ v + hessian_form(system, v)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_hessian_form_equals_half_row_dot_for_homogeneous(rng):
    system = random_framework(rng, 4, 2)
    v = rng.standard_normal(system.size)
    hf = hessian_form(system, v)
    rows = rigidity_matrix(system, v) @ v
    assert np.allclose(2 * hf, rows)


def test_dimension_errors(k3):
    with pytest.raises(DimensionError):
        evaluate(k3, np.zeros(5))
    with pytest.raises(DimensionError):
        rigidity_matrix(k3, np.zeros(7))
    with pytest.raises(DimensionError):
        hessian_form(k3, np.zeros(2))


def test_constraint_symmetrized():
    quad = np.array([[1.0, 2.0], [0.0, 1.0]])
    c = QuadraticConstraint(quad, np.zeros(2), 0.0, ConstraintKind.GENERIC, ())
    assert np.array_equal(c.quad, c.quad.T)
    x = np.array([0.7, -1.3])
    assert c(x) == pytest.approx(x @ quad @ x)


def test_infeasible_realization_rejected():
    cons = [distance_constraint(2, 2, 0, 1, 4.0)]
    with pytest.raises(InfeasibleRealization):
        make_system(2, [[0, 0], [1, 0]], cons)


def test_pins_add_d_constraints_each():
    system = catalog.framework([(0, 1), (1, 2)], np.eye(3), pins=[0, 2])
    n_pin = sum(c.kind is ConstraintKind.PIN for c in system.constraints)
    assert n_pin == 2 * 3


def test_volume_kind_guard():
    with pytest.raises(ValueError):
        ConstraintSystem(2, 2, np.array([0.0, 0.0, 1.0, 0.0]),
                         (distance_constraint(2, 2, 0, 1, 1.0),), frozenset(), TrivialKind.VOLUME_PRESERVING)


def test_congruent_under_rotation(rng):
    system = random_framework(rng, 4, 2)
    c, s = np.cos(0.4), np.sin(0.4)
    rot = np.array([[c, -s], [s, c]])
    y = (system.points() @ rot.T + [1.0, -2.0]).reshape(-1)
    assert congruent(system, system.realization, y)
    y[0] += 0.1
    assert not congruent(system, system.realization, y)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_volume2d_is_twice_signed_area(vals):
    x = np.array(vals)
    c = volume2d_constraint(3, (0, 1, 2), 0.0)
    (ax, ay), (bx, by), (cx, cy) = x.reshape(3, 2)
    area = 0.5 * ((bx - ax) * (cy - ay) - (cx - ax) * (by - ay))
    assert c(x) == pytest.approx(2 * area, abs=1e-12 * (1 + np.abs(x).max() ** 2))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 6), st.integers(2, 3))
def test_rows_are_affine_in_x(seed, n, d):
    rng = np.random.default_rng(seed)
    system = random_framework(rng, n, d)
    x, y = rng.standard_normal((2, system.size))
    t = rng.uniform()
    lhs = rigidity_matrix(system, t * x + (1 - t) * y)
    rhs = t * rigidity_matrix(system, x) + (1 - t) * rigidity_matrix(system, y)
    assert np.allclose(lhs, rhs, atol=1e-12)
    assert residual_norm(system, system.realization) <= 1e-8
