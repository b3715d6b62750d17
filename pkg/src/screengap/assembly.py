"""P1 stiffness/mass pairs on a cell mesh under the various boundary regimes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ParameterError
from .mesh import CellMesh

ScreenBC = Literal["neumann", "dirichlet"]
OuterBC = Literal["neumann", "dirichlet", "bloch"]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BoundaryRegime:
    """Boundary conditions on the screen and on the cell boundary.

    For ``outer_bc="bloch"`` the phases ``phi`` give ``theta_k = exp(i phi_k)``;
    they are reduced to ``[0, 2 pi)`` on construction.
    """

    screen_bc: ScreenBC = "neumann"
    outer_bc: OuterBC = "neumann"
    phi: Optional[tuple] = None

    def __post_init__(self):
        if self.screen_bc not in ("neumann", "dirichlet"):
            raise ParameterError(f"unknown screen condition {self.screen_bc!r}")
        if self.outer_bc not in ("neumann", "dirichlet", "bloch"):
            raise ParameterError(f"unknown outer condition {self.outer_bc!r}")
        if self.outer_bc == "bloch":
            if self.phi is None or len(self.phi) != 2:
                raise ParameterError("bloch conditions need two phase angles")
            object.__setattr__(self, "phi", tuple(float(p) % TWO_PI for p in self.phi))
        elif self.phi is not None:
            raise ParameterError("phase angles only apply to bloch conditions")

    @classmethod
    def bloch(cls, phi1, phi2, screen_bc: ScreenBC = "neumann") -> "BoundaryRegime":
        return cls(screen_bc=screen_bc, outer_bc="bloch", phi=(phi1, phi2))

    @property
    def theta(self) -> tuple:
        return tuple(_unit(p) for p in self.phi)

    @property
    def is_real(self) -> bool:
        return self.outer_bc != "bloch" or all(p in (0.0, math.pi) for p in self.phi)

    def label(self) -> str:
        if self.outer_bc == "bloch":
            return f"{self.screen_bc}/bloch({self.phi[0]:.6g},{self.phi[1]:.6g})"
        return f"{self.screen_bc}/{self.outer_bc}"


def _unit(phi: float) -> complex:
    # exact values at the lattice-symmetric points keep those pairs real
    if phi == 0.0:
        return 1.0 + 0j
    if phi == math.pi:
        return -1.0 + 0j
    return complex(math.cos(phi), math.sin(phi))


@dataclass(frozen=True, eq=False)
class OperatorPair:
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    dof_map: np.ndarray
    phases: np.ndarray
    field_kind: str
    regime: BoundaryRegime
    mesh: CellMesh
    master_nodes: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.stiffness.shape[0]

    def prolongation(self) -> sp.csr_matrix:
        """Node values from dof values: ``u_node = phase * u_dof``."""
        rows = np.flatnonzero(self.dof_map >= 0)
        dtype = float if self.field_kind == "real" else complex
        vals = self.phases[rows].astype(dtype) if dtype is complex else self.phases[rows].real
        return sp.csr_matrix((vals, (rows, self.dof_map[rows])), shape=(len(self.dof_map), self.n_dofs))

    def expand(self, x: np.ndarray) -> np.ndarray:
        return self.prolongation() @ x

    def restrict(self, node_values: np.ndarray) -> np.ndarray:
        """Dof vector taking the value of each dof's master node."""
        return np.asarray(node_values)[self.master_nodes]


def element_matrices(vertices: np.ndarray, triangles: np.ndarray):
    """Exact P1 element stiffness and consistent mass, shape (T, 3, 3)."""
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * np.abs(det)
    # gradients of the barycentric coordinates
    g = np.empty((len(p), 3, 2))
    g[:, 1, 0] = d2[:, 1] / det
    g[:, 1, 1] = -d2[:, 0] / det
    g[:, 2, 0] = -d1[:, 1] / det
    g[:, 2, 1] = d1[:, 0] / det
    g[:, 0] = -g[:, 1] - g[:, 2]
    ke = area[:, None, None] * np.einsum("tik,tjk->tij", g, g)
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    me = area[:, None, None] * ref[None]
    return ke, me


def assemble_full(mesh: CellMesh):
    """Unconstrained (pure Neumann) node-level matrices."""
    ke, me = element_matrices(mesh.vertices, mesh.triangles)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    # coo -> csr sums duplicates in a fixed order, so the result is deterministic
    K = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M


def _masters(mesh: CellMesh, regime: BoundaryRegime):
    n = mesh.n_nodes
    master = np.arange(n)
    phase = np.ones(n, dtype=complex)
    if regime.outer_bc != "bloch":
        return master, phase
    if mesh.outer_pairs is None or any(len(mesh.outer_pairs.get(k, ())) == 0 for k in ("x", "y")):
        raise ParameterError("bloch conditions need a mesh with periodic face pairing")
    th = regime.theta
    link = np.arange(n)
    link_phase = np.ones(n, dtype=complex)
    # x-faces first, then y-faces: the top-right corner resolves to bottom-left with theta1*theta2
    for axis, key in ((0, "x"), (1, "y")):
        lo, hi = mesh.outer_pairs[key][:, 0], mesh.outer_pairs[key][:, 1]
        link[hi] = lo
        link_phase[hi] = th[axis]
    for _ in range(3):
        nxt = link[master]
        phase = phase * np.where(nxt != master, link_phase[master], 1.0)
        master = nxt
    return master, phase


def constrained_nodes(mesh: CellMesh, regime: BoundaryRegime) -> np.ndarray:
    fixed = np.zeros(mesh.n_nodes, dtype=bool)
    if regime.outer_bc == "dirichlet":
        fixed[mesh.outer_nodes()] = True
    if regime.screen_bc == "dirichlet":
        fixed[mesh.screen_nodes()] = True
        fixed[mesh.tip_nodes] = True
    return fixed


def assemble(mesh: CellMesh, regime: BoundaryRegime, full=None) -> OperatorPair:
    """Constrained pair ``(K, M)`` realised by eliminating Dirichlet and slave nodes."""
    K, M = full if full is not None else assemble_full(mesh)
    master, phase = _masters(mesh, regime)
    fixed = constrained_nodes(mesh, regime)
    free_master = (master == np.arange(mesh.n_nodes)) & ~fixed
    dof_of = np.full(mesh.n_nodes, -1)
    dof_of[free_master] = np.arange(int(free_master.sum()))
    dof_map = dof_of[master]
    dof_map[fixed[master] | fixed] = -1
    kind = "real" if regime.is_real else "complex"
    phases = np.where(dof_map >= 0, phase, 0.0)
    rows = np.flatnonzero(dof_map >= 0)
    vals = phases[rows] if kind == "complex" else phases[rows].real
    P = sp.csr_matrix((vals, (rows, dof_map[rows])), shape=(mesh.n_nodes, int(free_master.sum())))
    Ph = P.conj().T.tocsr()
    Kr = Ph @ K @ P
    Mr = Ph @ M @ P
    Kr = ((Kr + Kr.conj().T) * 0.5).tocsr()
    Mr = ((Mr + Mr.conj().T) * 0.5).tocsr()
    Kr.sort_indices()
    Mr.sort_indices()
    return OperatorPair(Kr, Mr, dof_map, phases, kind, regime, mesh, np.flatnonzero(free_master))


def rayleigh_quotient(pair: OperatorPair, v: np.ndarray) -> float:
    v = np.asarray(v)
    if v.shape != (pair.n_dofs,):
        raise ParameterError(f"vector of length {pair.n_dofs} expected, got shape {v.shape}")
    den = np.vdot(v, pair.mass @ v).real
    if den == 0 or not np.any(v):
        raise ParameterError("Rayleigh quotient of the zero vector")
    return float(np.vdot(v, pair.stiffness @ v).real / den)


def dump_coo(matrix, path) -> None:
    """Coordinate text dump: ``row col real imag`` per entry, 17 significant digits."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w") as fh:
        for i in order:
            v = complex(m.data[i])
            fh.write(f"{m.row[i]} {m.col[i]} {v.real:.16e} {v.imag:.16e}\n")
