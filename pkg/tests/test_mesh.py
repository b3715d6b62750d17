import dataclasses

import numpy as np
import pytest

from screengap.errors import GeometryError, ParameterError
from screengap.mesh import (
    APERTURE,
    SCREEN_INNER,
    SCREEN_OUTER,
    CellGeometry,
    build_cell_mesh,
    read_cellmesh,
    square_mesh,
    validate_mesh,
    write_cellmesh,
)


def _component_areas(mesh):
    _, labels = mesh.components()
    area = mesh.triangle_areas()
    lab_t = labels[mesh.triangles[:, 0]]
    return sorted(float(area[lab_t == k].sum()) for k in np.unique(lab_t))


def test_closed_screen_two_components(cell_closed):
    rep = validate_mesh(cell_closed)
    assert rep.ok, rep.failed()
    areas = _component_areas(cell_closed)
    assert len(areas) == 2
    assert areas[0] == pytest.approx(0.25, abs=1e-10)
    assert areas[1] == pytest.approx(0.75, abs=1e-10)


def test_open_screen_single_component(cell_r05):
    rep = validate_mesh(cell_r05)
    assert rep.ok, rep.failed()
    assert cell_r05.components()[0] == 1
    assert cell_r05.triangle_areas().sum() == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("r", [0.0, 1e-7, 8.1e-4, 0.0048, 0.0366, 0.103, 0.2])
def test_generated_meshes_validate(r):
    mesh = build_cell_mesh(CellGeometry(b=0.5, hole_radius=r))
    rep = validate_mesh(mesh)
    assert rep.ok, {k: (c.offenders, c.detail) for k, c in rep.checks.items() if not c.passed}
    assert abs(mesh.triangle_areas().sum() - 1.0) <= 1e-10


def test_seam_node_multiplicity(cell_r05):
    m = cell_r05
    inner = m.vertices[m.tags == SCREEN_INNER]
    outer = m.vertices[m.tags == SCREEN_OUTER]
    assert len(inner) == len(outer) == len(m.seam_pairs)
    assert sorted(map(tuple, inner)) == sorted(map(tuple, outer))
    ap = m.vertices[m.tags == APERTURE]
    assert np.all(np.abs(ap[:, 0]) <= m.hole_radius)
    assert np.all(ap[:, 1] == 0.25)
    assert len(np.unique(ap, axis=0)) == len(ap)


def test_tips_are_aperture_nodes(cell_r05):
    m = cell_r05
    tips = m.vertices[m.tip_nodes]
    assert sorted(tips[:, 0]) == [-0.05, 0.05]
    assert np.all(m.tags[m.tip_nodes] == APERTURE)


def test_periodic_pairs_match(cell_r01):
    for axis, key in ((0, "x"), (1, "y")):
        pairs = cell_r01.outer_pairs[key]
        lo, hi = cell_r01.vertices[pairs[:, 0]], cell_r01.vertices[pairs[:, 1]]
        assert np.all(lo[:, axis] == -0.5) and np.all(hi[:, axis] == 0.5)
        assert np.max(np.abs(lo[:, 1 - axis] - hi[:, 1 - axis])) <= 1e-12


def test_merged_seam_node_is_reported(cell_r05):
    m = cell_r05
    inner, outer = m.seam_pairs[len(m.seam_pairs) // 2]
    tri = m.triangles.copy()
    tri[tri == inner] = outer  # B triangles now use the outer copy
    broken = dataclasses.replace(m, triangles=tri)
    rep = validate_mesh(broken)
    assert not rep.checks["seam"].passed
    assert int(inner) in rep.checks["seam"].offenders


def test_mismatched_periodic_coordinate_is_reported(cell_r05):
    m = cell_r05
    verts = m.vertices.copy()
    i, j = m.outer_pairs["x"][3]
    verts[j, 1] += 1e-9
    rep = validate_mesh(dataclasses.replace(m, vertices=verts))
    assert not rep.checks["outer_pairs"].passed
    assert ("x", int(i), int(j)) in rep.checks["outer_pairs"].offenders


def test_unresolvable_radius_is_refused():
    with pytest.raises(GeometryError):
        build_cell_mesh(CellGeometry(b=0.5, hole_radius=1e-9))


def test_geometry_checks():
    with pytest.raises(GeometryError):
        CellGeometry(b=0.5, hole_radius=0.25)
    with pytest.raises(ParameterError):
        CellGeometry(b=1.2, hole_radius=0.0)
    with pytest.raises(ParameterError):
        CellGeometry(b=0.5, hole_radius=0.01, grading_ratio=1.0)


def _tip_edge(mesh):
    e = mesh.edges()
    L = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
    at_tip = np.isin(e, mesh.tip_nodes).any(axis=1)
    return L[at_tip].max()


@pytest.mark.parametrize("r", [0.01, 0.05])
def test_tip_refinement_halves_tip_elements(r):
    coarse = build_cell_mesh(CellGeometry(b=0.5, hole_radius=r, tip_size=r / 4))
    fine = build_cell_mesh(CellGeometry(b=0.5, hole_radius=r, tip_size=r / 8))
    ratio = _tip_edge(fine) / _tip_edge(coarse)
    assert 0.4 <= ratio <= 0.6


def _bulk_count(mesh, r, cut=0.15):
    # triangles outside the coarse mesh's grading zone around the tips
    c = mesh.vertices[mesh.triangles].mean(axis=1)
    return int(np.sum(np.hypot(np.abs(c[:, 0]) - r, c[:, 1] - 0.25) > cut))


def test_halving_hmax_quadruples_bulk():
    a = build_cell_mesh(CellGeometry(b=0.5, hole_radius=0.05, h_max=1 / 32))
    b = build_cell_mesh(CellGeometry(b=0.5, hole_radius=0.05, h_max=1 / 64))
    coarse, fine = _bulk_count(a, 0.05), _bulk_count(b, 0.05)
    assert fine >= 4 * coarse, f"bulk triangles {coarse} -> {fine} (ratio {fine / coarse:.3f})"


def test_halving_hmax_bulk_ratio_near_four():
    counts = [_bulk_count(build_cell_mesh(CellGeometry(b=0.5, hole_radius=0.05, h_max=h)), 0.05) for h in (1 / 32, 1 / 64, 1 / 128)]
    ratios = [b / a for a, b in zip(counts, counts[1:])]
    assert all(3.8 <= q <= 4.2 for q in ratios)


def test_quality_bounds(cell_r01):
    ang = cell_r01.min_angles()
    assert ang.min() >= 5.0
    assert np.percentile(ang, 1) >= 15.0


def test_mesh_file_round_trip(tmp_path, cell_r01):
    path = tmp_path / "cell.mesh"
    write_cellmesh(cell_r01, path)
    back = read_cellmesh(path)
    assert np.array_equal(back.vertices, cell_r01.vertices)
    assert np.array_equal(back.triangles, cell_r01.triangles)
    assert np.array_equal(back.seam_pairs, cell_r01.seam_pairs)
    assert np.array_equal(back.tags, cell_r01.tags)
    assert np.array_equal(back.tip_nodes, cell_r01.tip_nodes)
    for k in ("x", "y"):
        assert np.array_equal(back.outer_pairs[k], cell_r01.outer_pairs[k])
    assert back.b == cell_r01.b and back.hole_radius == cell_r01.hole_radius


def test_bad_mesh_file(tmp_path):
    p = tmp_path / "x.mesh"
    p.write_text("not a mesh\n")
    with pytest.raises(ParameterError):
        read_cellmesh(p)


def test_square_mesh_validates():
    rep = validate_mesh(square_mesh(8))
    assert rep.ok, rep.failed()


def test_mirror_symmetry_of_generated_mesh(cell_r01):
    v = cell_r01.vertices
    mirrored = {(-x, y) for x, y in map(tuple, v)}
    assert mirrored == {tuple(p) for p in v}
