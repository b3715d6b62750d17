import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from screengap.analytic import GapSpec, ScreenParams, gap_edges, hole_radius, maxwell_gap
from screengap.bands import (
    ERROR_KEYS,
    MeshPolicy,
    _check_bracket,
    box_neumann_spectrum,
    converge_study,
    detect_gaps,
    dirichlet_floor,
    limit_spectra,
    phi_grid_points,
    sweep_bands,
    trap_rayleigh_bound,
    trap_test_vector,
)
from screengap.errors import ConsistencyError, ParameterError
from screengap.mesh import CellGeometry, build_cell_mesh

COARSE = MeshPolicy(h_max=1 / 32)
PARAMS = ScreenParams(2, 1.0, 0.5)


def test_detect_gaps_simple():
    bands = np.array([[0.0, 1.0], [2.0, 3.0], [2.5, 4.0]])
    assert detect_gaps(bands, 5.0) == [(1.0, 2.0), (4.0, 5.0)]
    assert detect_gaps(bands, 3.5) == [(1.0, 2.0)]


def test_detect_gaps_touching_bands_merge():
    bands = np.array([[0.0, 1.0], [1.0 + 1e-12, 2.0]])
    assert detect_gaps(bands, 2.0) == []


def test_detect_gaps_origin_noise_floor():
    bands = np.array([[1e-13, 1.0], [2.0, 3.0]])
    assert detect_gaps(bands, 3.0) == [(0.0, 1e-13), (1.0, 2.0)]
    assert detect_gaps(bands, 3.0, atol=1e-10) == [(1.0, 2.0)]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 3)), min_size=1, max_size=8), st.floats(0.5, 15))
def test_detect_gaps_are_disjoint_from_bands(raw, upper):
    bands = np.array([[lo, lo + w] for lo, w in raw])
    gaps = detect_gaps(bands, upper)
    for g0, g1 in gaps:
        assert 0.0 <= g0 < g1 <= upper
        mid = 0.5 * (g0 + g1)
        assert not np.any((bands[:, 0] <= mid) & (mid <= bands[:, 1]))
    assert all(a[1] <= b[0] for a, b in zip(gaps, gaps[1:]))


def test_phi_grid_points():
    pts = phi_grid_points(4)
    assert len(pts) == 16
    assert (math.pi, math.pi) in pts and (0.0, 0.0) in pts
    assert len(phi_grid_points(3)) == 9 + 3
    with pytest.raises(ParameterError):
        phi_grid_points(2)


def test_bracket_violation_raises():
    with pytest.raises(ConsistencyError, match="k=2"):
        _check_bracket(np.array([1.0, 5.0]), np.array([0.5, 1.0]), np.array([2.0, 4.0]), 1e-8, 1e-9, "test")
    _check_bracket(np.array([1.0, 4.0 + 1e-10]), np.array([0.5, 1.0]), np.array([2.0, 4.0]), 1e-8, 1e-9, "test")


def test_box_neumann_spectrum():
    assert np.allclose(box_neumann_spectrum(0.5, 4), [0, 4 * math.pi**2, 4 * math.pi**2, 8 * math.pi**2])


def test_closed_screen_has_flat_zero_band():
    bs = sweep_bands(CellGeometry(b=0.5, hole_radius=0.0, h_max=1 / 32), 1.0, phi_grid=4, k_max=3, window_L=50.0)
    # the trap constant is an eigenfunction at every phase
    assert bs.bands[0, 1] < 1e-8
    assert bs.bands[1, 0] < 1e-8 < bs.bands[1, 1]


@pytest.fixture(scope="module")
def sweep_small():
    eps = 0.5
    r = hole_radius(PARAMS.with_eps(eps))
    return sweep_bands(COARSE.geometry(0.5, r), eps, phi_grid=4, k_max=4, window_L=2 * gap_edges(PARAMS).mu)


def test_sweep_brackets_and_tables(sweep_small):
    bs = sweep_small
    assert bs.eigen_tables.shape == (len(phi_grid_points(4)), 4)
    assert np.all(bs.bands[:, 0] <= bs.bands[:, 1])
    assert np.all(bs.neumann <= bs.eigen_tables.min(axis=0) + 1e-8)
    assert bs.residual_max <= 1e-10
    assert np.array_equal(bs.corner_values((0.0, 0.0)), bs.eigen_tables[0])
    assert np.allclose(bs.physical_tables, bs.eigen_tables / 0.25)


def test_sweep_has_a_gap_near_the_limit(sweep_small):
    g = gap_edges(PARAMS)
    assert sweep_small.gaps
    lo, hi = sweep_small.gaps[0]
    assert lo < g.mu and hi > g.sigma


def test_maxwell_on_detected_gap(sweep_small):
    lo, hi = sweep_small.gaps[0]
    neg, pos = maxwell_gap(GapSpec(lo, hi))
    assert pos == pytest.approx((math.sqrt(lo), math.sqrt(hi)))
    assert neg == (-pos[1], -pos[0])


def test_finer_phi_grid_only_widens_bands(sweep_small):
    fine = sweep_bands(
        COARSE.geometry(0.5, hole_radius(PARAMS.with_eps(0.5))), 0.5, phi_grid=8, k_max=4, window_L=sweep_small.window_L
    )
    # every point of the 4-grid is in the 8-grid
    assert np.all(fine.bands[:, 0] <= sweep_small.bands[:, 0] * (1 + 1e-8))
    assert np.all(fine.bands[:, 1] >= sweep_small.bands[:, 1] * (1 - 1e-8))
    assert abs(fine.gaps[0][0] - sweep_small.gaps[0][0]) / sweep_small.gaps[0][0] < 0.02


def test_sweep_rejects():
    geom = CellGeometry(b=0.5, hole_radius=0.05, h_max=1 / 16)
    with pytest.raises(ParameterError):
        sweep_bands(geom, 0.0)
    with pytest.raises(ParameterError):
        sweep_bands(geom, 1.0, k_max=0)
    with pytest.raises(ParameterError):
        sweep_bands(geom, 1.0, phi_grid=4, window_L=-1.0)


def test_trap_test_vector_levels():
    mesh = build_cell_mesh(CellGeometry(b=0.5, hole_radius=0.05, h_max=1 / 32))
    v = trap_test_vector(mesh, 0.05)
    inb = mesh.node_in_b()
    assert np.allclose(v[inb & (mesh.vertices[:, 1] < 0)], 2.0)
    assert np.allclose(v[mesh.vertices[:, 1] > 0.45], 0.0)
    assert np.all((v >= 0) & (v <= 2.0 + 1e-14))
    with pytest.raises(ParameterError):
        trap_test_vector(mesh, 0.0)


def test_rayleigh_bound_above_dirichlet_ground_state():
    from screengap.assembly import assemble
    from screengap.bands import DIRICHLET
    from screengap.eigen import smallest_eigs

    mesh = build_cell_mesh(CellGeometry(b=0.5, hole_radius=0.05, h_max=1 / 32))
    lam = smallest_eigs(assemble(mesh, DIRICHLET), 1).values[0]
    assert trap_rayleigh_bound(mesh, 0.05) >= lam


def test_limit_spectra_patterns():
    ls = limit_spectra(CellGeometry(b=0.5, hole_radius=0.0, h_max=1 / 32), k_max=4)
    assert ls.ok, ls.checks
    assert ls.trap_neumann[0] == pytest.approx(0.0, abs=1e-8)
    assert np.allclose(ls.trap_neumann[1:3], ls.trap_exact[1:3], rtol=5e-3)
    with pytest.raises(ParameterError):
        limit_spectra(CellGeometry(b=0.5, hole_radius=0.01))


def test_dirichlet_floor_positive_and_scaled():
    geom = CellGeometry(b=0.5, hole_radius=0.05, h_max=1 / 32)
    f1 = dirichlet_floor(geom, 1.0, phi_grid=4)
    f2 = dirichlet_floor(geom, 0.5, phi_grid=4)
    assert f1.cell_floor > 0
    assert f2.cell_floor == f1.cell_floor
    assert f2.physical_floor == pytest.approx(4 * f1.physical_floor)
    assert f1.values.min() == f1.cell_floor


def test_converge_study_small():
    st_ = converge_study(PARAMS, [0.45, 0.6], COARSE, phi_grid=0)
    assert [r.eps for r in st_.records] == [0.6, 0.45]
    assert all(r.ok for r in st_.records)
    assert set(st_.trends()) == set(ERROR_KEYS)
    assert all(v in ("pass", "fail") for v in st_.trends().values())
    for r in st_.records:
        assert r.rayleigh >= r.lam_d1
        assert r.gap is None


def test_converge_single_eps_is_insufficient():
    st_ = converge_study(PARAMS, [0.5], COARSE, phi_grid=0)
    assert set(st_.trends().values()) == {"insufficient-data"}


def test_converge_skips_unresolvable_eps():
    st_ = converge_study(PARAMS, [0.5, 0.1], COARSE, phi_grid=0)
    assert st_.records[1].status == "skipped: unresolvable"
    assert len(st_.resolved()) == 1
    with pytest.raises(ParameterError):
        converge_study(PARAMS, [], COARSE)
    with pytest.raises(ParameterError):
        converge_study(PARAMS, [0.5, -1.0], COARSE)
