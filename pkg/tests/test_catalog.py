import itertools

import numpy as np
import pytest

from motionforge import catalog
from motionforge.constraints import ConstraintKind, evaluate, residual_norm
from motionforge.flexes import select_flex
from motionforge.rigidity import analyze
from motionforge.tracker import EventKind, track_path

S3 = np.sqrt(3) / 2
PRISM_FACES = [(0, 2, 1), (3, 4, 5), (0, 1, 4, 3), (1, 2, 5, 4), (2, 0, 3, 5)]
PRISM_PTS = np.array([[0, 0, 0], [1, 0, 0], [0.5, S3, 0], [0, 0, 1], [1, 0, 1], [0.5, S3, 1]], dtype=float)


def octahedron_spec():
    pts = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)
    faces = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4), (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    return catalog.PolytopeSpec(faces, pts)


@pytest.mark.parametrize("name", catalog.builtin_names())
def test_builtins_feasible(name):
    system = catalog.builtin(name)
    assert residual_norm(system, system.realization) <= 1e-8
    assert catalog.describe(name)


def test_unknown_builtin_lists_names():
    with pytest.raises(catalog.CatalogError, match="four_bar"):
        catalog.builtin("nope")


def test_three_prism_counts():
    system = catalog.builtin("three_prism")
    assert system.size == 12
    assert system.n_constraints == 9 + 4


def test_double_watt_shape():
    system = catalog.builtin("double_watt")
    assert system.n_vertices == 11
    assert system.pinned == {0, 5, 10}
    assert not analyze(system).inf_rigid


def test_zero_length_bar_rejected():
    with pytest.raises(catalog.CatalogError):
        catalog.framework([(0, 1)], [[0, 0], [0, 0]])


def test_repeated_edge_rejected():
    with pytest.raises(catalog.CatalogError):
        catalog.framework([(0, 1), (1, 0)], [[0, 0], [1, 0]])


def test_packing_contacts():
    spec = catalog.disk_packing_spec()
    assert catalog.detect_contacts(spec) == [(0, 1), (1, 2), (2, 3)]
    assert analyze(catalog.builtin("disk_packing_4")).n_nontrivial == 2


def test_packing_no_contacts():
    spec = catalog.PackingSpec(1.0, [[0, 0], [3, 0]])
    system = catalog.sphere_packing(spec, [0])
    assert all(c.kind is ConstraintKind.PIN for c in system.constraints)


def test_packing_equilateral():
    spec = catalog.PackingSpec(1.0, [[0, 0], [2, 0], [1, np.sqrt(3)]])
    assert len(catalog.detect_contacts(spec)) == 3


def test_packing_overlap_rejected():
    with pytest.raises(catalog.CatalogError):
        catalog.PackingSpec(1.0, [[0, 0], [1, 0]])


def test_sticky_update_none_at_start():
    spec = catalog.disk_packing_spec()
    system = catalog.builtin("disk_packing_4")
    assert catalog.sticky_update(spec, system, system.realization) is None


def test_sticky_path_adds_one_contact():
    spec = catalog.disk_packing_spec()
    system = catalog.builtin("disk_packing_4")
    path = track_path(system, select_flex(analyze(system), [1.0, 1.0]), 60, 0.05,
                      sticky=lambda s, x: catalog.sticky_update(spec, s, x))
    sticky = [e for e in path.events if e.kind is EventKind.STICKY_CONTACT]
    assert len(sticky) == 1
    grown = path.final_system
    assert grown.n_constraints == system.n_constraints + 1
    assert grown.constraints[:system.n_constraints] == system.constraints
    after = [x for k, x in enumerate(path.realizations) if k >= sticky[0].step]
    for x in after:
        assert residual_norm(grown, x) <= 1e-8
        assert residual_norm(system, x) <= 1e-8


def brute_force_edges(faces):
    out = set()
    for a, b in itertools.combinations(range(len(faces)), 2):
        common = set(faces[a]) & set(faces[b])
        if len(common) == 2:
            out.add(tuple(sorted(common)))
    return sorted(out)


def test_polytope_edges_match_oracle():
    for spec in (catalog.cube_polytope_spec(), octahedron_spec(), catalog.PolytopeSpec(PRISM_FACES, PRISM_PTS)):
        assert list(spec.edges) == brute_force_edges(spec.faces)


def test_cube_polytope_shape():
    spec = catalog.cube_polytope_spec()
    system = catalog.polytope(spec)
    assert system.size == 42
    assert len(spec.edges) == 12
    rep = analyze(system)
    assert not rep.inf_rigid
    centroid = spec.vertex_coords.mean(axis=0)
    for f, nrm in zip(spec.faces, spec.normals_init):
        assert nrm @ (spec.vertex_coords[list(f)].mean(axis=0) - centroid) > 0


def test_tetrahedron_is_rigid():
    pts = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    faces = [(0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2)]
    assert analyze(catalog.polytope(catalog.PolytopeSpec(faces, pts))).inf_rigid


def test_pinned_polytope_has_no_trivial_flex():
    spec = catalog.cube_polytope_spec()
    system = catalog.polytope(spec, pins=[0, 1, 2, 3, 6])
    assert analyze(system).trivial_dim == 0


def test_non_planar_face_rejected():
    spec = catalog.cube_polytope_spec()
    pts = spec.vertex_coords.copy()
    pts[7] += [0.1, 0.1, 0.1]
    with pytest.raises(catalog.CatalogError):
        catalog.polytope(catalog.PolytopeSpec(spec.faces, pts))


def test_euler_check():
    with pytest.raises(catalog.CatalogError):
        catalog.PolytopeSpec([(0, 1, 2), (0, 2, 3)], np.eye(4)[:, :3])


def contraction_lengths(system, edge, path):
    u, v = edge
    return [np.linalg.norm(system.points(x)[u] - system.points(x)[v]) for x in path.realizations]


def test_octahedron_contraction():
    system = catalog.polytope(octahedron_spec())
    path = catalog.edge_contraction_path(system, (0, 2), 0.75, 30)
    assert path.error is None
    lengths = contraction_lengths(system, (0, 2), path)
    assert lengths[-1] == pytest.approx(0.75 * lengths[0], abs=1e-8)
    assert np.all(np.diff(lengths) < 0)
    assert max(path.residual_log) <= 1e-8


def test_prism_lateral_edge_contraction_monotone():
    system = catalog.polytope(catalog.PolytopeSpec(PRISM_FACES, PRISM_PTS))
    path = catalog.edge_contraction_path(system, (0, 3), 0.75, 30)
    assert path.error is None
    lengths = contraction_lengths(system, (0, 3), path)
    assert np.all(np.diff(lengths) < 0)
    assert lengths[-1] == pytest.approx(0.75, abs=1e-8)


def test_contraction_gamma_one_is_constant():
    system = catalog.polytope(octahedron_spec())
    path = catalog.edge_contraction_path(system, (0, 2), 1.0, 5)
    for x in path.realizations:
        assert np.allclose(x, system.realization, atol=1e-12)


def test_contraction_unknown_edge():
    system = catalog.polytope(octahedron_spec())
    with pytest.raises(catalog.CatalogError):
        catalog.edge_contraction_path(system, (0, 1), 0.9, 5)


def test_body_bar_constraint_count():
    system = catalog.builtin("cube_body_bar")
    assert system.n_constraints == 2 * 6 + 4


def test_pentagon_body_hinge_flexible():
    assert not analyze(catalog.builtin("pentagon_body_hinge")).inf_rigid


def test_single_panel_rigid():
    system = catalog.body_hinge([[0, 1, 2, 3]], [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert analyze(system).inf_rigid


def test_volume_single_triangle():
    system = catalog.volume_hypergraph([(0, 1, 2)], [[0, 0], [2, 0], [0, 1]])
    rep = analyze(system)
    assert rep.trivial_dim == 5 and rep.n_nontrivial == 0


def test_volume_invariant_under_unimodular_map(rng):
    system = catalog.builtin("octahedral_volume")
    shear = np.array([[1.0, 0.7], [0.0, 1.0]])
    pts = system.points() @ shear.T + rng.standard_normal(2)
    vol = [c.kind is ConstraintKind.VOLUME2D for c in system.constraints]
    assert np.allclose(evaluate(system, pts.reshape(-1))[vol], 0.0, atol=1e-12)


def test_volume_requires_plane():
    with pytest.raises(catalog.CatalogError):
        catalog.volume_hypergraph([(0, 1, 2)], np.eye(3))


def test_cube_edge_contraction_truncates_cleanly():
    # the four faces away from an edge are equilateral quadrilaterals, which pin its length
    system = catalog.builtin("cube_polytope")
    path = catalog.edge_contraction_path(system, (0, 1), 0.9, 20)
    assert path.truncated
    assert len(path.realizations) == 1
    assert np.array_equal(path.realizations[0], system.realization)
