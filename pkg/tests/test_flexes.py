import numpy as np
import pytest

from motionforge import catalog
from motionforge.flexes import (
    FlexSource,
    RigidSystemError,
    canonical_sign,
    find_unblocked_flex,
    select_flex,
)
from motionforge.rigidity import analyze, is_blocked, q_system


def test_select_flex_unit_norm():
    rep = analyze(catalog.builtin("disk_packing_4"))
    choice = select_flex(rep, [3.0, 4.0])
    assert np.allclose(choice.coefficients, [0.6, 0.8])
    assert np.linalg.norm(choice.flex) == pytest.approx(1.0)
    assert choice.source is FlexSource.USER_COEFFICIENTS


def test_select_flex_errors():
    rep = analyze(catalog.builtin("disk_packing_4"))
    with pytest.raises(ValueError):
        select_flex(rep, [1.0])
    with pytest.raises(ValueError):
        select_flex(rep, [0.0, 0.0])
    rigid = analyze(catalog.framework([(0, 1)], [[0, 0], [1, 0]], pins=[0, 1]))
    with pytest.raises(RigidSystemError):
        select_flex(rigid, [])


def test_sole_flex_without_stress():
    system = catalog.builtin("four_bar")
    rep = analyze(system)
    choice = find_unblocked_flex(system, rep)
    assert choice.source is FlexSource.SOLE_FLEX
    assert np.allclose(choice.flex, rep.nontrivial_flex_basis[:, 0])


def test_unblocked_flex_solves_q_system():
    system = catalog.builtin("double_watt")
    rep = analyze(system)
    choice = find_unblocked_flex(system, rep, seed=0)
    assert choice.source is FlexSource.SOLVED_UNBLOCKED
    lam = choice.coefficients
    q = q_system(system, rep)
    assert np.max(np.abs(np.einsum("sjk,j,k->s", q, lam, lam))) <= 1e-10
    assert np.linalg.norm(lam) == pytest.approx(1.0)
    assert not is_blocked(system, rep, choice.flex)


def test_symmetric_prism_has_no_unblocked_flex():
    system = catalog.builtin("three_prism_symmetric")
    assert find_unblocked_flex(system, analyze(system)) is None


def test_seeded_search_is_deterministic():
    system = catalog.builtin("cube_body_bar")
    rep = analyze(system)
    a = find_unblocked_flex(system, rep, seed=7)
    b = find_unblocked_flex(system, rep, seed=7)
    assert np.array_equal(a.flex, b.flex)


def test_canonical_sign():
    assert np.array_equal(canonical_sign(np.array([0.0, -2.0, 1.0])), [0.0, 2.0, -1.0])
    assert np.array_equal(canonical_sign(np.array([1e-15, 3.0])), [1e-15, 3.0])
