import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from motionforge import catalog
from motionforge.constraints import TrivialKind, evaluate, make_system, residual_norm, unit_norm_constraint
from motionforge.retraction import (
    RandomizationError,
    TrackerConfig,
    gauss_newton,
    randomize,
    retract,
)
from motionforge.rigidity import analyze, matrix_rank, null_space

from conftest import random_framework


def sphere(d, p):
    return make_system(d, np.asarray(p, dtype=float)[None, :], [unit_norm_constraint(d, 1, 0)],
                       trivial_kind=TrivialKind.PINS_ONLY)


def tangent(rng, p):
    v = rng.standard_normal(p.size)
    v -= (v @ p) * p
    return v / np.linalg.norm(v)


def random_point(rng, d):
    p = rng.standard_normal(d)
    return p / np.linalg.norm(p)


@pytest.mark.parametrize("d", [2, 3])
def test_closest_point_oracle(d, rng):
    for _ in range(25):
        p = random_point(rng, d)
        v = tangent(rng, p)
        scale = rng.uniform(0.01, 0.5)
        res = retract(sphere(d, p), p, v, scale)
        target = p + scale * v
        assert np.linalg.norm(res.endpoint - target / np.linalg.norm(target)) <= 1e-8
        assert res.final_residual <= 1e-10
        assert np.array_equal(res.polyline[0], p)
        assert not res.randomized


def test_curve_length_is_arc_length(rng):
    p = np.array([1.0, 0.0])
    res = retract(sphere(2, p), p, np.array([0.0, 1.0]), 0.4)
    assert res.curve_length == pytest.approx(np.arctan(0.4), abs=1e-3)


def test_second_order_agreement_with_geodesic():
    p, v = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.6, 0.8])
    system = sphere(3, p)
    ts = [0.1, 0.05, 0.025]
    errs = []
    for t in ts:
        geo = np.cos(t) * p + np.sin(t) * v
        errs.append(np.linalg.norm(retract(system, p, v, t).endpoint - geo))
    orders = [np.log(errs[i] / errs[i + 1]) / np.log(2) for i in range(2)]
    assert min(orders) >= 2.5


def test_zero_direction_returns_start():
    p = np.array([0.0, 1.0])
    res = retract(sphere(2, p), p, np.zeros(2), 1.0)
    assert np.array_equal(res.endpoint, p)
    assert res.curve_length == 0.0


def test_rejects_non_tangent_and_infeasible():
    p = np.array([1.0, 0.0])
    system = sphere(2, p)
    with pytest.raises(ValueError):
        retract(system, p, np.array([1.0, 0.0]), 0.1)
    with pytest.raises(ValueError):
        retract(system, np.array([2.0, 0.0]), np.array([0.0, 1.0]), 0.1)


def test_gauss_newton_quadratic_convergence():
    def res(z):
        return np.array([z[0] ** 2 + z[1] ** 2 - 1.0, z[0] - z[1]])

    def jac(z):
        return np.array([[2 * z[0], 2 * z[1]], [1.0, -1.0]])

    out = gauss_newton(res, jac, np.array([1.0, 0.3]), tol=1e-15, max_iter=20)
    assert out.converged
    r = [x for x in out.residuals if x > 1e-14]
    ratios = [r[i + 1] / r[i] ** 2 for i in range(len(r) - 1)]
    assert max(ratios[1:]) < 10.0
    assert np.allclose(out.z, [np.sqrt(0.5)] * 2)


def test_config_validation():
    with pytest.raises(ValueError):
        TrackerConfig(corrector_tol=-1)
    with pytest.raises(ValueError):
        TrackerConfig(t_step_shrink=1.5)


def duplicated(rng, k):
    edges = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]
    system = random_framework(rng, 4, 2, edges=edges)
    extra = [system.constraints[i] for i in rng.choice(len(edges), size=k, replace=False)]
    return system.replace(constraints=system.constraints + tuple(extra))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 3))
def test_randomization_removes_stresses(seed, k):
    rng = np.random.default_rng(seed)
    system = duplicated(rng, k)
    rep = analyze(system)
    p = system.realization
    for s in range(5):
        view, mix = randomize(system, p, s, report=rep)
        jac = view.jacobian(p)
        assert jac.shape[0] == system.n_constraints - rep.n_stresses
        assert matrix_rank(jac) == jac.shape[0]
        assert null_space(jac).shape[1] == rep.n_flexes
        assert np.allclose(view.evaluate(p), mix @ evaluate(system, p))


def test_randomize_requires_stress():
    system = catalog.builtin("four_bar")
    with pytest.raises(RandomizationError):
        randomize(system)


def test_randomized_retraction_stays_on_original_constraints():
    system = catalog.builtin("three_prism")
    rep = analyze(system)
    v = rep.nontrivial_flex_basis[:, 0]
    res = retract(system, system.realization, v, 0.05, report=rep)
    assert res.randomized
    assert residual_norm(system, res.endpoint) <= 1e-10
    assert np.linalg.norm(res.endpoint - system.realization) > 0.01


def test_retraction_deterministic():
    system = catalog.builtin("three_prism")
    v = analyze(system).nontrivial_flex_basis[:, 0]
    a = retract(system, system.realization, v, 0.05, seed=3)
    b = retract(system, system.realization, v, 0.05, seed=3)
    assert np.array_equal(a.endpoint, b.endpoint)
