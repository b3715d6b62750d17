"""Band sweeps over the Brillouin torus, gap detection and epsilon studies."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .analytic import GapSpec, ScreenParams, gap_edges, hole_radius
from .assembly import BoundaryRegime, OperatorPair, assemble, assemble_full, rayleigh_quotient
from .capacity import aperture_profile_2d, default_cutoff
from .eigen import smallest_eigs
from .errors import ConsistencyError, GeometryError, ParameterError
from .mesh import MIN_RESOLVABLE_RADIUS, CellGeometry, CellMesh, build_cell_mesh

log = logging.getLogger(__name__)

EIG_TOL = 1e-10
BRACKET_RTOL = 1e-8
MERGE_RTOL = 1e-8

NEUMANN = BoundaryRegime()
DIRICHLET = BoundaryRegime(outer_bc="dirichlet")
THETA_ONE = BoundaryRegime.bloch(0.0, 0.0)
THETA_TWO = BoundaryRegime.bloch(math.pi, math.pi)


@dataclass(frozen=True)
class MeshPolicy:
    """How a cell mesh is derived from the hole radius: tip size ``r * tip_factor``."""

    tip_factor: float = 0.25
    h_max: float = 1.0 / 64
    grading_ratio: float = 1.3

    def geometry(self, b: float, r: float) -> CellGeometry:
        tip = r * self.tip_factor if r > 0 else None
        return CellGeometry(b=b, hole_radius=r, grading_ratio=self.grading_ratio, h_max=self.h_max, tip_size=tip)


def phi_grid_points(phi_grid: int) -> list:
    """Uniform ``phi_grid x phi_grid`` grid on [0, 2pi)^2 plus the four corners {0, pi}^2."""
    if int(phi_grid) != phi_grid or phi_grid < 3:
        raise ParameterError(f"phi_grid must be an integer >= 3, got {phi_grid!r}")
    axis = [2.0 * math.pi * j / phi_grid for j in range(phi_grid)]
    # keep the lattice-symmetric points exact
    axis = [math.pi if abs(a - math.pi) < 1e-15 else a for a in axis]
    pts = {(a, c) for a in axis for c in axis}
    pts.update((a, c) for a in (0.0, math.pi) for c in (0.0, math.pi))
    return sorted(pts)


def _check_bracket(lam, lower, upper, rtol, atol, where):
    lo_tol = rtol * np.abs(lower) + atol
    hi_tol = rtol * np.abs(upper) + atol
    bad_lo = lam < lower - lo_tol
    bad_hi = lam > upper + hi_tol
    for k in np.flatnonzero(bad_lo | bad_hi):
        raise ConsistencyError(
            f"bracketing violated at {where}, k={k + 1}: "
            f"N={lower[k]:.17g} theta={lam[k]:.17g} D={upper[k]:.17g}"
        )


def _merge(intervals: np.ndarray, rtol: float) -> list:
    order = np.argsort(intervals[:, 0], kind="stable")
    merged = []
    for lo, hi in intervals[order]:
        if merged and lo <= merged[-1][1] + rtol * max(abs(merged[-1][1]), abs(lo)):
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return merged


def detect_gaps(bands: np.ndarray, upper: float, rtol: float = MERGE_RTOL, atol: float = 0.0) -> list:
    """Maximal open intervals of ``[0, upper]`` missed by the union of ``bands``.

    ``atol`` is the eigenvalue noise floor: a band starting within it of 0
    touches the origin.
    """
    gaps = []
    cursor = 0.0
    for lo, hi in _merge(np.asarray(bands, dtype=float), rtol):
        if lo > upper:
            break
        if lo > cursor + rtol * abs(cursor) + (atol if cursor == 0.0 else 0.0):
            gaps.append((cursor, float(lo)))
        cursor = max(cursor, float(hi))
    if cursor < upper:
        gaps.append((cursor, float(upper)))
    return gaps


@dataclass
class BandStructure:
    epsilon: float
    theta_samples: list
    eigen_tables: np.ndarray
    neumann: np.ndarray
    dirichlet: np.ndarray
    bands: np.ndarray
    gaps: list
    k_max: int
    window_L: float
    coverage: float
    residual_max: float = 0.0
    n_nodes: int = 0

    @property
    def physical_tables(self) -> np.ndarray:
        return self.eigen_tables / self.epsilon**2

    def corner_values(self, phi: tuple) -> np.ndarray:
        i = self.theta_samples.index(tuple(float(p) for p in phi))
        return self.eigen_tables[i]


def _solve(mesh, full, regime, k, tol, seed):
    return smallest_eigs(assemble(mesh, regime, full), k, tol=tol, seed=seed)


def _pool_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map preserves submission order, so reductions are deterministic
        return list(pool.map(fn, items))


def sweep_bands(
    geom: CellGeometry,
    eps: float,
    phi_grid: int = 8,
    k_max: int = 6,
    window_L: Optional[float] = None,
    tol: float = EIG_TOL,
    seed: int = 0,
    threads: int = 1,
    mesh: Optional[CellMesh] = None,
    bracket_rtol: float = BRACKET_RTOL,
) -> BandStructure:
    """Bloch eigenvalues on the phi grid, band intervals and gaps on the physical scale."""
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps!r}")
    if int(k_max) != k_max or k_max < 1:
        raise ParameterError(f"k_max must be a positive integer, got {k_max!r}")
    samples = phi_grid_points(phi_grid)
    mesh = mesh if mesh is not None else build_cell_mesh(geom)
    full = assemble_full(mesh)
    regimes = [NEUMANN, DIRICHLET] + [BoundaryRegime.bloch(*phi) for phi in samples]
    results = _pool_map(lambda rg: _solve(mesh, full, rg, k_max, tol, seed), regimes, threads)
    lam_n, lam_d = results[0].values, results[1].values
    table = np.array([r.values for r in results[2:]])
    atol = 10 * tol
    for phi, row in zip(samples, table):
        _check_bracket(row, lam_n, lam_d, bracket_rtol, atol, f"phi=({phi[0]:.6g},{phi[1]:.6g})")
    scale = 1.0 / eps**2
    bands = np.column_stack([table.min(axis=0), table.max(axis=0)]) * scale
    if window_L is None:
        window_L = 2.0 * float(bands[min(1, k_max - 1), 0])
    if not window_L > 0:
        raise ParameterError(f"window_L must be positive, got {window_L!r}")
    # bands above k_max start no lower than a_kmax^-, so the spectrum is known up to there
    coverage = float(bands[-1, 0])
    upper = min(window_L, coverage)
    if coverage < window_L:
        log.warning("k_max=%d covers the spectrum only up to %.6g < window %.6g", k_max, coverage, window_L)
    gaps = detect_gaps(bands, upper, atol=atol * scale)
    res = max(float(r.residuals.max()) for r in results)
    return BandStructure(
        epsilon=float(eps),
        theta_samples=samples,
        eigen_tables=table,
        neumann=lam_n,
        dirichlet=lam_d,
        bands=bands,
        gaps=gaps,
        k_max=int(k_max),
        window_L=float(window_L),
        coverage=coverage,
        residual_max=res,
        n_nodes=mesh.n_nodes,
    )


def trap_test_vector(mesh: CellMesh, r: float, l: Optional[float] = None) -> np.ndarray:
    """Node values of the trap test function.

    ``1/sqrt|B|`` deep in the trap, ``0`` far outside, bridged across the
    aperture by the logarithmic profile so both sides meet at ``1/(2 sqrt|B|)``.
    """
    if mesh.b is None or not r > 0:
        raise ParameterError("the trap test function needs a screened mesh with an open aperture")
    b = mesh.b
    l = default_cutoff(b) if l is None else l
    prof = aperture_profile_2d(r, l)
    vol = b * b
    x0 = np.array([0.0, b / 2])
    rho = np.hypot(mesh.vertices[:, 0] - x0[0], mesh.vertices[:, 1] - x0[1])
    psi = prof(np.maximum(rho, r))
    half = psi / (2.0 * math.sqrt(vol))
    return np.where(mesh.node_in_b(), 1.0 / math.sqrt(vol) - half, half)


def trap_rayleigh_bound(mesh: CellMesh, r: float, full=None, l: Optional[float] = None) -> float:
    """Rayleigh quotient of the trap test function in the outer-Dirichlet pair."""
    pair = assemble(mesh, DIRICHLET, full)
    return rayleigh_quotient(pair, pair.restrict(trap_test_vector(mesh, r, l)))


ERROR_KEYS = ("dirichlet_1", "neumann_2", "theta2_1", "theta1_2")


@dataclass
class EpsRecord:
    eps: float
    hole_radius: float
    status: str
    n_nodes: int = 0
    h_max: float = math.nan
    tip_size: float = math.nan
    lam_d1: float = math.nan
    lam_n1: float = math.nan
    lam_n2: float = math.nan
    lam_t1_1: float = math.nan
    lam_t1_2: float = math.nan
    lam_t2_1: float = math.nan
    rayleigh: float = math.nan
    errors: dict = field(default_factory=dict)
    gap: Optional[tuple] = None
    gaps: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class ConvergenceStudy:
    params: ScreenParams
    targets: GapSpec
    records: list
    mesh_policy: MeshPolicy
    phi_grid: int

    def resolved(self) -> list:
        return [r for r in self.records if r.ok]

    def error_series(self, key: str) -> np.ndarray:
        return np.array([abs(r.errors[key]) for r in self.resolved()])

    def trend(self, key: str) -> str:
        """``pass`` if the absolute error strictly decreases along the eps list."""
        e = self.error_series(key)
        if len(e) < 2:
            return "insufficient-data"
        return "pass" if np.all(np.diff(e) < 0) else "fail"

    def trends(self) -> dict:
        return {k: self.trend(k) for k in ERROR_KEYS}


def _record(params: ScreenParams, eps: float, policy: MeshPolicy, targets: GapSpec, phi_grid: int, tol, seed, threads):
    t0 = time.perf_counter()
    try:
        p = params.with_eps(eps)
        r = hole_radius(p)
    except GeometryError as exc:
        log.info("eps=%g skipped: %s", eps, exc)
        return EpsRecord(eps=eps, hole_radius=math.nan, status="skipped: unresolvable")
    if r < MIN_RESOLVABLE_RADIUS:
        log.info("eps=%g skipped: hole radius %.3g below %.0e", eps, r, MIN_RESOLVABLE_RADIUS)
        return EpsRecord(eps=eps, hole_radius=r, status="skipped: unresolvable")
    geom = policy.geometry(params.b, r)
    mesh = build_cell_mesh(geom)
    full = assemble_full(mesh)
    lam = {}
    for name, rg in (("D", DIRICHLET), ("N", NEUMANN), ("T2", THETA_TWO), ("T1", THETA_ONE)):
        lam[name] = _solve(mesh, full, rg, 3, tol, seed).values
    s = 1.0 / eps**2
    errors = {
        "dirichlet_1": s * lam["D"][0] / targets.sigma - 1.0,
        "neumann_2": s * lam["N"][1] / targets.mu - 1.0,
        "theta2_1": s * lam["T2"][0] / targets.sigma - 1.0,
        "theta1_2": s * lam["T1"][1] / targets.mu - 1.0,
    }
    ray = trap_rayleigh_bound(mesh, r, full)
    rec = EpsRecord(
        eps=eps,
        hole_radius=r,
        status="ok",
        n_nodes=mesh.n_nodes,
        h_max=geom.h_max,
        tip_size=geom.tip_h,
        lam_d1=lam["D"][0],
        lam_n1=lam["N"][0],
        lam_n2=lam["N"][1],
        lam_t1_1=lam["T1"][0],
        lam_t1_2=lam["T1"][1],
        lam_t2_1=lam["T2"][0],
        rayleigh=ray,
        errors=errors,
    )
    if phi_grid:
        bs = sweep_bands(geom, eps, phi_grid=phi_grid, window_L=targets.window, tol=tol, seed=seed, threads=threads, mesh=mesh)
        rec.gaps = bs.gaps
        rec.gap = bs.gaps[0] if bs.gaps else None
    rec.seconds = time.perf_counter() - t0
    return rec


def converge_study(
    params: ScreenParams,
    eps_list: Sequence[float],
    mesh_policy: Optional[MeshPolicy] = None,
    phi_grid: int = 8,
    capT: Optional[float] = None,
    tol: float = EIG_TOL,
    seed: int = 0,
    threads: int = 1,
) -> ConvergenceStudy:
    """Cell eigenvalues against the limit gap edges along a decreasing eps list.

    ``phi_grid=0`` skips the band sweep (no detected gap per record).
    """
    policy = mesh_policy or MeshPolicy()
    eps_sorted = sorted((float(e) for e in eps_list), reverse=True)
    if not eps_sorted:
        raise ParameterError("eps_list is empty")
    if any(not e > 0 for e in eps_sorted):
        raise ParameterError("every eps must be positive")
    targets = gap_edges(params, capT)
    records = [_record(params, e, policy, targets, phi_grid, tol, seed, threads) for e in eps_sorted]
    return ConvergenceStudy(params=params, targets=targets, records=records, mesh_policy=policy, phi_grid=phi_grid)


@dataclass
class LimitSpectra:
    neumann: np.ndarray
    dirichlet: np.ndarray
    periodic: np.ndarray
    antiperiodic: np.ndarray
    trap_neumann: np.ndarray
    trap_exact: np.ndarray
    checks: dict

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def box_neumann_spectrum(b: float, count: int) -> np.ndarray:
    """Lowest ``count`` values of ``(pi/b)^2 (p^2 + q^2)`` with multiplicity."""
    m = int(math.ceil(math.sqrt(count))) + 2
    vals = sorted((math.pi / b) ** 2 * (p * p + q * q) for p in range(m) for q in range(m))
    return np.array(vals[:count])


def limit_spectra(
    geom_closed: CellGeometry, k_max: int = 6, tol: float = EIG_TOL, seed: int = 0, zero_tol: float = 1e-8, gap_tol: float = 1e-2
) -> LimitSpectra:
    """Limit operators on the closed-screen cell and their multiplicity patterns."""
    if geom_closed.hole_radius != 0:
        raise ParameterError("limit spectra need a closed screen (hole_radius = 0)")
    mesh = build_cell_mesh(geom_closed)
    full = assemble_full(mesh)
    lam_n = _solve(mesh, full, NEUMANN, k_max, tol, seed).values
    lam_d = _solve(mesh, full, DIRICHLET, k_max, tol, seed).values
    lam_p = _solve(mesh, full, THETA_ONE, k_max, tol, seed).values
    lam_a = _solve(mesh, full, THETA_TWO, k_max, tol, seed).values
    # the trap block decouples exactly when the screen is closed
    K, M = full
    inb = np.flatnonzero(mesh.node_in_b())
    pair = OperatorPair(
        K[inb][:, inb].tocsr(), M[inb][:, inb].tocsr(), np.arange(len(inb)), np.ones(len(inb)), "real", NEUMANN, mesh, inb
    )
    trap = smallest_eigs(pair, 4, tol=tol, seed=seed).values
    zero = lambda v: abs(v) < zero_tol  # noqa: E731
    pos = lambda v: v > gap_tol  # noqa: E731
    checks = {
        "neumann 0,0,+": zero(lam_n[0]) and zero(lam_n[1]) and pos(lam_n[2]),
        "dirichlet 0,+": zero(lam_d[0]) and pos(lam_d[1]),
        "periodic 0,0,+": zero(lam_p[0]) and zero(lam_p[1]) and pos(lam_p[2]),
        "antiperiodic 0,+": zero(lam_a[0]) and pos(lam_a[1]),
    }
    return LimitSpectra(lam_n, lam_d, lam_p, lam_a, trap, box_neumann_spectrum(geom_closed.b, 4), checks)


@dataclass
class FloorResult:
    cell_floor: float
    physical_floor: float
    epsilon: float
    theta_samples: list
    values: np.ndarray


def dirichlet_floor(
    geom: CellGeometry, eps: float = 1.0, phi_grid: int = 8, tol: float = EIG_TOL, seed: int = 0, threads: int = 1
) -> FloorResult:
    """Lowest Bloch eigenvalue over the phi grid with Dirichlet conditions on the screen."""
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps!r}")
    samples = phi_grid_points(phi_grid)
    mesh = build_cell_mesh(geom)
    full = assemble_full(mesh)
    regimes = [BoundaryRegime.bloch(*phi, screen_bc="dirichlet") for phi in samples]
    vals = np.array(_pool_map(lambda rg: _solve(mesh, full, rg, 1, tol, seed).values[0], regimes, threads))
    floor = float(vals.min())
    if not floor > 0:
        raise ConsistencyError(f"Dirichlet floor {floor!r} is not positive")
    return FloorResult(floor, floor / eps**2, float(eps), samples, vals)
