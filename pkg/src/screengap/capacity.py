"""Capacity of the unit (n-1)-disc and the 2D aperture potential profile.

The capacity problem is axisymmetric about the disc normal, so it is solved on
the meridian quarter plane ``{(rho, z): rho >= 0, z >= 0, rho^2 + z^2 <= R^2}``
with the weight ``rho^(n-2)``; the full-space energy is ``2 |S^(n-2)|`` times
the weighted meridian energy (two half spaces, one sphere of revolution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import quad
from scipy.special import gamma

from .errors import ParameterError
from .mesh import graded_triangulation, walk_segment

MIN_DOMAIN_RADIUS = 4.0

Shape = Literal["disc", "ball"]


@dataclass(frozen=True)
class CapacityResult:
    n: int
    capT: float
    domain_radius: float
    mesh_h: float
    extrapolated: bool
    raw: tuple = ()
    n_nodes: int = 0


def sphere_area(k: int) -> float:
    """Surface measure of the unit k-sphere in R^(k+1)."""
    return 2.0 * math.pi ** ((k + 1) / 2.0) / gamma((k + 1) / 2.0)


def _triangle_rule(order: int):
    """Gauss rule on the reference triangle via the collapsed square map."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    s, t = np.meshgrid(x, x, indexing="ij")
    ws = np.outer(w, w)
    # (s, t) in the unit square -> (xi, eta) = (s (1 - t), t), Jacobian 1 - t
    xi = (s * (1.0 - t)).ravel()
    eta = t.ravel()
    return xi, eta, (ws * (1.0 - t)).ravel()


def _weighted_stiffness(pts: np.ndarray, tri: np.ndarray, n: int) -> sp.csr_matrix:
    p = pts[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    g = np.empty((len(p), 3, 2))
    g[:, 1, 0] = d2[:, 1] / det
    g[:, 1, 1] = -d2[:, 0] / det
    g[:, 2, 0] = -d1[:, 1] / det
    g[:, 2, 1] = d1[:, 0] / det
    g[:, 0] = -g[:, 1] - g[:, 2]
    # integral of rho^(n-2) over each triangle; exact for polynomial weights
    xi, eta, w = _triangle_rule(max(2, n // 2 + 1))
    rho = p[:, 0, 0, None] + d1[:, 0, None] * xi[None, :] + d2[:, 0, None] * eta[None, :]
    wint = np.abs(det) * (np.maximum(rho, 0.0) ** (n - 2) @ w)
    ke = wint[:, None, None] * np.einsum("tik,tjk->tij", g, g)
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    m = len(pts)
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(m, m)).tocsr()


def _arc(radius: float, size_fn: Callable, start: float, stop: float) -> np.ndarray:
    length = radius * abs(stop - start)
    # march in arclength, reusing the straight-segment walker on the unrolled arc
    s = walk_segment(
        np.array([0.0, 0.0]),
        np.array([length, 0.0]),
        lambda q: size_fn(np.column_stack(_polar(radius, start + (stop - start) * q[:, 0] / length))),
    )[:, 0]
    ang = start + (stop - start) * s / length
    pts = np.column_stack(_polar(radius, ang))
    pts[0] = np.array(_polar(radius, start))
    pts[-1] = np.array(_polar(radius, stop))
    return pts


def _polar(radius, ang):
    # exact axis points at the quarter angles
    c = np.where(np.isclose(ang, math.pi / 2), 0.0, np.cos(ang))
    s = np.where(np.isclose(ang, 0.0), 0.0, np.sin(ang))
    return radius * c, radius * s


def _meridian_mesh(shape: Shape, R: float, h: float):
    """Quarter-plane mesh graded toward the singular set of the potential."""
    if shape == "disc":
        focus = np.array([1.0, 0.0])
        h_tip = h / 16.0
    else:
        focus = None
        h_tip = h

    def size_fn(q):
        q = np.atleast_2d(q)
        far = h * np.maximum(1.0, np.hypot(q[:, 0], q[:, 1]) / 2.0)
        if focus is None:
            return far
        dist = np.hypot(q[:, 0] - focus[0], q[:, 1] - focus[1])
        return np.minimum(far, h_tip + 0.25 * dist)

    if shape == "disc":
        pieces = [
            walk_segment((0.0, 0.0), (1.0, 0.0), size_fn),
            walk_segment((1.0, 0.0), (R, 0.0), size_fn),
            _arc(R, size_fn, 0.0, math.pi / 2),
            walk_segment((0.0, R), (0.0, 0.0), size_fn),
        ]
    else:
        pieces = [
            walk_segment((1.0, 0.0), (R, 0.0), size_fn),
            _arc(R, size_fn, 0.0, math.pi / 2),
            walk_segment((0.0, R), (0.0, 1.0), size_fn),
            _arc(1.0, size_fn, math.pi / 2, 0.0),
        ]
    ring = np.concatenate([p[:-1] for p in pieces])
    m = len(ring)
    segs = np.column_stack([np.arange(m), (np.arange(m) + 1) % m])
    return graded_triangulation(ring, segs, size_fn, flags="pq30")


def _solve(shape: Shape, n: int, R: float, h: float):
    pts, tri = _meridian_mesh(shape, R, h)
    K = _weighted_stiffness(pts, tri, n)
    rad = np.hypot(pts[:, 0], pts[:, 1])
    outer = np.abs(rad - R) < 1e-9 * R
    if shape == "disc":
        inner = (pts[:, 1] == 0.0) & (pts[:, 0] <= 1.0)
    else:
        inner = np.abs(rad - 1.0) < 1e-9
    u = np.zeros(len(pts))
    u[inner] = 1.0
    free = ~(inner | outer)
    rhs = -(K[free][:, inner] @ u[inner])
    u[free] = spla.spsolve(K[free][:, free].tocsc(), rhs)
    energy = float(u @ (K @ u))
    return 2.0 * sphere_area(n - 2) * energy, pts, tri, u


def _check(n: int, R: float, h: float) -> None:
    if int(n) != n or n < 3:
        raise ParameterError(f"capacity needs an integer dimension n >= 3, got {n!r}")
    if not R >= MIN_DOMAIN_RADIUS:
        raise ParameterError(f"domain radius {R!r} too small for the far-field expansion (need R >= {MIN_DOMAIN_RADIUS})")
    if not 0 < h <= 1:
        raise ParameterError(f"mesh_h must lie in (0, 1], got {h!r}")


def _capacity(shape: Shape, n: int, R: float, h: float, extrapolate: bool) -> CapacityResult:
    _check(n, R, h)
    c1, pts, _, _ = _solve(shape, n, R, h)
    if not extrapolate:
        return CapacityResult(n, c1, R, h, False, raw=(c1,), n_nodes=len(pts))
    c2, pts2, _, _ = _solve(shape, n, 2.0 * R, h)
    # 1/cap_R is affine in R^(2-n) up to higher multipole terms
    q = 2.0 ** (n - 2)
    inv = (q / c2 - 1.0 / c1) / (q - 1.0)
    return CapacityResult(n, 1.0 / inv, R, h, True, raw=(c1, c2), n_nodes=len(pts2))


def disc_capacity(n: int = 3, domain_radius: float = 8.0, mesh_h: float = 0.1, extrapolate: bool = True) -> CapacityResult:
    """Capacity of the unit (n-1)-disc in R^n.

    Solves the truncated problem (``w = 1`` on the disc, ``w = 0`` at radius
    ``R``) at ``R`` and ``2R`` and extrapolates the reciprocal linearly in
    ``R^(2-n)``.  The meridian reduction is exact for every ``n >= 3``.
    """
    return _capacity("disc", n, domain_radius, mesh_h, extrapolate)


def ball_capacity(n: int = 3, domain_radius: float = 8.0, mesh_h: float = 0.1, extrapolate: bool = True) -> CapacityResult:
    """Capacity of the unit ball by the same solver; exact value ``(n-2)|S^(n-1)|``."""
    return _capacity("ball", n, domain_radius, mesh_h, extrapolate)


def disc_potential(n: int = 3, domain_radius: float = 8.0, mesh_h: float = 0.1):
    """Discrete truncated potential on the meridian mesh: ``(points, triangles, values)``."""
    _check(n, domain_radius, mesh_h)
    _, pts, tri, u = _solve("disc", n, domain_radius, mesh_h)
    return pts, tri, u


def oblate_disc_potential(rho, z) -> np.ndarray:
    """Exact potential of the unit disc in R^3 (equal to 1 on the disc, 0 at infinity)."""
    rho = np.asarray(rho, dtype=float)
    z = np.asarray(z, dtype=float)
    s = np.hypot(rho + 1.0, z) + np.hypot(rho - 1.0, z)
    return (2.0 / math.pi) * np.arcsin(np.minimum(1.0, 2.0 / s))


def oblate_disc_capacity() -> float:
    """Flux of the exact disc potential through both faces, by quadrature."""
    # normal derivative on each face: (2/pi) / sqrt(1 - rho^2)
    face, _ = quad(lambda r: (2.0 / math.pi) * 2.0 * math.pi * r / math.sqrt(1.0 - r * r), 0.0, 1.0, limit=200)
    return 2.0 * face


def ball_capacity_exact(n: int = 3) -> float:
    """Energy of ``min(1, |x|^(2-n))`` by the radial integral."""
    area = sphere_area(n - 1)
    val, _ = quad(lambda r: ((n - 2) * r ** (1 - n)) ** 2 * r ** (n - 1), 1.0, np.inf)
    return area * val


@dataclass(frozen=True)
class ApertureProfile:
    """Logarithmic cutoff ``rho -> clamp(ln(l/rho)/ln(l/r), 0, 1)``."""

    hole_radius: float
    cutoff_radius: float

    def __post_init__(self):
        if not self.hole_radius > 0:
            raise ParameterError(f"hole radius must be positive, got {self.hole_radius!r}")
        if not self.hole_radius < self.cutoff_radius:
            raise ParameterError(
                f"need hole radius < cutoff radius, got r={self.hole_radius!r}, l={self.cutoff_radius!r}"
            )

    @property
    def log_ratio(self) -> float:
        return math.log(self.cutoff_radius / self.hole_radius)

    def profile(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        with np.errstate(divide="ignore"):
            v = np.log(self.cutoff_radius / rho) / self.log_ratio
        return np.clip(v, 0.0, 1.0)

    __call__ = profile

    def half_annulus_energy(self) -> float:
        """Dirichlet energy over the half annulus ``r < rho < l``: ``pi / ln(l/r)``."""
        return math.pi / self.log_ratio

    def half_annulus_energy_quad(self) -> float:
        """Same energy from the radial integral, as a check on the closed form."""
        L = self.log_ratio
        val, _ = quad(lambda s: math.pi * (1.0 / (s * L)) ** 2 * s, self.hole_radius, self.cutoff_radius, limit=200)
        return val


def aperture_profile_2d(r: float, l: float) -> ApertureProfile:
    return ApertureProfile(hole_radius=r, cutoff_radius=l)


def default_cutoff(b: float) -> float:
    """Cutoff radius ``l`` used by the trap test function: ``0.24 min(b, 1-b)``."""
    return 0.24 * min(b, 1.0 - b)
