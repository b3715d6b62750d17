"""Triangulated period cell with a slit screen.

The cell ``Y = (-1/2, 1/2)^2`` contains the square ``B = (-b/2, b/2)^2``.  The
screen is ``dB`` minus an aperture of half-width ``r`` centred at ``(0, b/2)``.
Screen nodes are duplicated (one copy for B, one for the exterior F), so the
P1 space allows jumps across the screen and stays continuous through the
aperture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import triangle
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import GeometryError, ParameterError

INTERIOR_F, INTERIOR_B, SCREEN_INNER, SCREEN_OUTER, APERTURE, OUTER = range(6)
TAG_NAMES = ("interior-F", "interior-B", "screen-inner", "screen-outer", "aperture", "outer-boundary")

MIN_RESOLVABLE_RADIUS = 1e-8
_SQRT3_4 = math.sqrt(3.0) / 4.0


@dataclass(frozen=True)
class CellGeometry:
    b: float
    hole_radius: float
    grading_ratio: float = 1.3
    h_max: float = 1.0 / 64
    tip_size: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.b < 1:
            raise ParameterError(f"screen edge b must lie in (0, 1), got {self.b!r}")
        if not 0 <= self.hole_radius < self.b / 2:
            raise GeometryError(f"hole radius must satisfy 0 <= r < b/2, got {self.hole_radius!r}")
        if not self.grading_ratio > 1:
            raise ParameterError("grading ratio must exceed 1")
        if not self.h_max > 0:
            raise ParameterError("h_max must be positive")
        if self.tip_size is not None and not self.tip_size > 0:
            raise ParameterError("tip size must be positive")

    @property
    def aperture_center(self) -> tuple:
        return (0.0, self.b / 2)

    @property
    def tip_h(self) -> float:
        if self.tip_size is not None:
            return self.tip_size
        if self.hole_radius > 0:
            return self.hole_radius / 4
        return self.h_max

    def size_at(self, pts: np.ndarray) -> np.ndarray:
        """Target element size: geometric growth away from the slit tips, capped at ``h_max``."""
        pts = np.atleast_2d(pts)
        if self.hole_radius == 0 and self.tip_size is None:
            return np.full(len(pts), self.h_max)
        r, yb = self.hole_radius, self.b / 2
        dist = np.hypot(np.abs(pts[:, 0]) - r, pts[:, 1] - yb)
        return np.minimum(self.h_max, self.tip_h + (self.grading_ratio - 1.0) * dist)


@dataclass(frozen=True, eq=False)
class CellMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    seam_pairs: np.ndarray
    outer_pairs: dict
    tags: np.ndarray
    b: Optional[float] = None
    hole_radius: float = 0.0
    tip_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.vertices)

    def triangle_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def triangle_in_b(self) -> np.ndarray:
        if self.b is None:
            return np.zeros(len(self.triangles), dtype=bool)
        c = self.vertices[self.triangles].mean(axis=1)
        return (np.abs(c[:, 0]) < self.b / 2) & (np.abs(c[:, 1]) < self.b / 2)

    def node_in_b(self) -> np.ndarray:
        """Nodes belonging to the trap side (interior-B, inner screen copies, aperture)."""
        return np.isin(self.tags, (INTERIOR_B, SCREEN_INNER, APERTURE))

    def screen_nodes(self) -> np.ndarray:
        return np.flatnonzero(np.isin(self.tags, (SCREEN_INNER, SCREEN_OUTER)))

    def outer_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.tags == OUTER)

    def edges(self) -> np.ndarray:
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def edge_lengths(self) -> np.ndarray:
        e = self.edges()
        return np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)

    def min_angles(self) -> np.ndarray:
        """Smallest interior angle of every triangle, in degrees."""
        p = self.vertices[self.triangles]
        out = np.full(len(p), 180.0)
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            c = p[:, (i + 2) % 3] - p[:, i]
            cosang = (a * c).sum(1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(c, axis=1))
            out = np.minimum(out, np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return out

    def components(self) -> tuple:
        e = self.edges()
        n = self.n_nodes
        g = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return connected_components(g, directed=False)

    def permuted(self, perm: np.ndarray) -> "CellMesh":
        """Same mesh with node ``perm[i]`` renamed to ``i``."""
        perm = np.asarray(perm)
        inv = np.empty_like(perm)
        inv[perm] = np.arange(len(perm))
        return CellMesh(
            vertices=self.vertices[perm],
            triangles=inv[self.triangles],
            seam_pairs=inv[self.seam_pairs],
            outer_pairs={k: inv[v] for k, v in self.outer_pairs.items()},
            tags=self.tags[perm],
            b=self.b,
            hole_radius=self.hole_radius,
            tip_nodes=inv[self.tip_nodes],
        )


def walk_segment(a, b, size_fn: Callable) -> np.ndarray:
    """Points on the segment ``a -> b`` (endpoints included) spaced by ``size_fn``.

    Steps follow the local size, then get rescaled so the last one lands on ``b``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    u = (b - a) / length
    s = [0.0]
    while True:
        h = float(size_fn((a + s[-1] * u)[None, :])[0])
        for _ in range(4):
            h = min(h, float(size_fn((a + (s[-1] + h) * u)[None, :])[0]))
        nxt = s[-1] + h
        if nxt >= length - 0.5 * h:
            break
        s.append(nxt)
    s = np.array(s + [length])
    s *= length / s[-1]
    pts = a[None, :] + s[:, None] * u[None, :]
    pts[-1] = b
    return pts


def graded_triangulation(vertices, segments, size_fn, flags="pq30", max_passes=60):
    """Constrained Delaunay triangulation refined until every triangle meets ``size_fn``.

    The size target of a triangle is the smallest value over its vertices;
    the matching area is that of the equilateral triangle with that edge.
    """
    h0 = float(np.max(size_fn(vertices)))
    t = triangle.triangulate(dict(vertices=vertices, segments=segments), flags + f"a{_SQRT3_4 * h0 * h0:.17g}")
    n_prev = -1
    for _ in range(max_passes):
        pts, tri = t["vertices"], t["triangles"]
        if len(pts) == n_prev:
            # only hull-locked triangles remain; their size is set by the hull spacing
            return pts, tri
        n_prev = len(pts)
        h = size_fn(pts)[tri].min(axis=1)
        target = _SQRT3_4 * h * h
        p = pts[tri]
        area = 0.5 * np.abs(
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
        )
        bad = area > 1.5 * target
        if not bad.any():
            return pts, tri
        limits = np.where(bad, target, -1.0)
        t = triangle.triangulate(
            dict(vertices=pts, triangles=tri, segments=t["segments"], triangle_max_area=limits),
            "r" + flags + "a",
        )
    raise GeometryError("mesh grading did not settle; check the size function")


def _chain(points):
    """Concatenate polyline pieces, dropping repeated joints."""
    out = [points[0]]
    for p in points[1:]:
        out.append(p[1:])
    return np.concatenate(out)


def _half_cell(geom: CellGeometry):
    b2 = geom.b / 2
    r = geom.hole_radius
    size = geom.size_at

    def sym_x(p):  # same spacing on y = -1/2 and y = +1/2
        q = p.copy()
        q[:, 1] = -q[:, 1]
        return np.minimum(size(p), size(q))

    bottom = walk_segment((0, -0.5), (0.5, -0.5), sym_x)
    right = walk_segment((0.5, -0.5), (0.5, 0.5), size)
    top = bottom[::-1].copy()
    top[:, 1] = 0.5
    axis_pts = _chain([
        walk_segment((0, 0.5), (0, b2), size),
        walk_segment((0, b2), (0, -b2), size),
        walk_segment((0, -b2), (0, -0.5), size),
    ])
    hull = _chain([bottom, right, top, axis_pts])[:-1]
    nh = len(hull)
    hull_segs = np.column_stack([np.arange(nh), (np.arange(nh) + 1) % nh])

    # screen polyline in the half cell: (0,-b/2) -> (b/2,-b/2) -> (b/2,b/2) -> (r,b/2) [-> (0,b/2)]
    pieces = [
        walk_segment((0, -b2), (b2, -b2), size),
        walk_segment((b2, -b2), (b2, b2), size),
    ]
    if r > 0:
        pieces.append(walk_segment((b2, b2), (r, b2), size))
        pieces.append(walk_segment((r, b2), (0, b2), size))
    else:
        pieces.append(walk_segment((b2, b2), (0, b2), size))
    inner = _chain(pieces)
    # endpoints (0, +-b/2) already sit on the hull
    inner_mid = inner[1:-1]
    i_lo = _find(hull, (0.0, -b2))
    i_hi = _find(hull, (0.0, b2))
    ids = np.concatenate([[i_lo], nh + np.arange(len(inner_mid)), [i_hi]])
    inner_segs = np.column_stack([ids[:-1], ids[1:]])
    verts = np.vstack([hull, inner_mid])
    segs = np.vstack([hull_segs, inner_segs])
    return graded_triangulation(verts, segs, size, flags="pq30Y")


def _find(pts, p):
    d = np.abs(pts - np.asarray(p)).max(axis=1)
    i = int(np.argmin(d))
    if d[i] > 1e-14:
        raise GeometryError(f"expected vertex {p} missing")
    return i


def _mirror(pts, tri):
    on_axis = pts[:, 0] == 0.0
    off = np.flatnonzero(~on_axis)
    mirror_idx = np.arange(len(pts))
    mirror_idx[off] = len(pts) + np.arange(len(off))
    mpts = pts[off].copy()
    mpts[:, 0] = -mpts[:, 0]
    all_pts = np.vstack([pts, mpts])
    mtri = mirror_idx[tri][:, [0, 2, 1]]
    return all_pts, np.vstack([tri, mtri])


def _orient(pts, tri):
    p = pts[tri]
    a = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    tri = tri.copy()
    neg = a < 0
    tri[neg] = tri[neg][:, [0, 2, 1]]
    return tri


def _periodic_pairs(pts):
    def pair(axis):
        lo = np.flatnonzero(pts[:, axis] == -0.5)
        hi = np.flatnonzero(pts[:, axis] == 0.5)
        other = 1 - axis
        lo = lo[np.argsort(pts[lo, other], kind="stable")]
        hi = hi[np.argsort(pts[hi, other], kind="stable")]
        if len(lo) != len(hi) or np.any(pts[lo, other] != pts[hi, other]):
            raise GeometryError("opposite cell faces are not discretised identically")
        return np.column_stack([lo, hi])

    return {"x": pair(0), "y": pair(1)}


def _sort_nodes(pts):
    # lexicographic (y, x) order keeps numbering deterministic and banded
    return np.lexsort((pts[:, 0], pts[:, 1]))


def build_cell_mesh(geom: CellGeometry) -> CellMesh:
    """Graded, mirror-symmetric seam mesh of the period cell."""
    r = geom.hole_radius
    if 0 < r < MIN_RESOLVABLE_RADIUS:
        raise GeometryError(f"hole radius {r:.3g} below the resolvable limit {MIN_RESOLVABLE_RADIUS:g}")
    pts, tri = _half_cell(geom)
    pts, tri = _mirror(pts, tri)
    order = _sort_nodes(pts)
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    pts = pts[order]
    tri = _orient(pts, inv[tri])

    b2 = geom.b / 2
    x, y = pts[:, 0], pts[:, 1]
    on_b = ((np.abs(y) == b2) & (np.abs(x) <= b2)) | ((np.abs(x) == b2) & (np.abs(y) <= b2))
    aperture = (y == b2) & (np.abs(x) <= r) if r > 0 else np.zeros(len(pts), dtype=bool)
    screen = on_b & ~aperture
    tips = np.flatnonzero((y == b2) & (np.abs(x) == r)) if r > 0 else np.zeros(0, dtype=np.int64)

    inside = (np.abs(x) < b2) & (np.abs(y) < b2)
    outer = (np.abs(x) == 0.5) | (np.abs(y) == 0.5)
    tags = np.full(len(pts), INTERIOR_F, dtype=np.int8)
    tags[inside] = INTERIOR_B
    tags[outer] = OUTER
    tags[aperture] = APERTURE
    tags[screen] = SCREEN_INNER

    # duplicate screen nodes; exterior triangles switch to the outer copy
    inner_ids = np.flatnonzero(screen)
    outer_ids = len(pts) + np.arange(len(inner_ids))
    remap = np.arange(len(pts))
    remap[inner_ids] = outer_ids
    c = pts[tri].mean(axis=1)
    tri_f = ~((np.abs(c[:, 0]) < b2) & (np.abs(c[:, 1]) < b2))
    tri = tri.copy()
    tri[tri_f] = remap[tri[tri_f]]
    pts = np.vstack([pts, pts[inner_ids]])
    tags = np.concatenate([tags, np.full(len(inner_ids), SCREEN_OUTER, dtype=np.int8)])

    return CellMesh(
        vertices=pts,
        triangles=tri.astype(np.int64),
        seam_pairs=np.column_stack([inner_ids, outer_ids]).astype(np.int64),
        outer_pairs=_periodic_pairs(pts),
        tags=tags,
        b=geom.b,
        hole_radius=r,
        tip_nodes=tips.astype(np.int64),
    )


def square_mesh(n: int) -> CellMesh:
    """Structured mesh of the empty cell (no screen), ``n`` intervals per side."""
    if n < 1:
        raise ParameterError("need at least one interval per side")
    s = np.linspace(-0.5, 0.5, n + 1)
    s[0], s[-1] = -0.5, 0.5
    X, Y = np.meshgrid(s, s)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    a, b_, c, d = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel(), idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    tri = np.vstack([np.column_stack([a, b_, c]), np.column_stack([a, c, d])])
    tags = np.full(len(pts), INTERIOR_F, dtype=np.int8)
    tags[(np.abs(pts[:, 0]) == 0.5) | (np.abs(pts[:, 1]) == 0.5)] = OUTER
    return CellMesh(
        vertices=pts,
        triangles=tri.astype(np.int64),
        seam_pairs=np.zeros((0, 2), dtype=np.int64),
        outer_pairs=_periodic_pairs(pts),
        tags=tags,
    )


@dataclass
class CheckResult:
    passed: bool
    offenders: list = field(default_factory=list)
    detail: str = ""


@dataclass
class MeshReport:
    checks: dict

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list:
        return [k for k, c in self.checks.items() if not c.passed]


def validate_mesh(mesh: CellMesh, tip_zone: Optional[float] = None) -> MeshReport:
    """Check every structural invariant of a cell mesh; never raises."""
    checks = {}
    area = mesh.triangle_areas()
    neg = np.flatnonzero(area <= 0)
    checks["orientation"] = CheckResult(len(neg) == 0, neg[:20].tolist())
    total = float(area.sum())
    checks["area"] = CheckResult(abs(total - 1.0) <= 1e-10, [], f"total area {total!r}")

    # seam: screen positions carry exactly two nodes, used by B and F triangles respectively
    seam_bad = []
    in_b = mesh.triangle_in_b()
    used_b = np.zeros(mesh.n_nodes, dtype=bool)
    used_f = np.zeros(mesh.n_nodes, dtype=bool)
    used_b[mesh.triangles[in_b].ravel()] = True
    used_f[mesh.triangles[~in_b].ravel()] = True
    for inner, outer in mesh.seam_pairs:
        if np.any(mesh.vertices[inner] != mesh.vertices[outer]) or used_f[inner] or used_b[outer]:
            seam_bad.append(int(inner))
    screen = np.isin(mesh.tags, (SCREEN_INNER, SCREEN_OUTER))
    if mesh.b is not None:
        _, inv, counts = np.unique(mesh.vertices, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        mult = counts[inv]
        seam_bad += np.flatnonzero(screen & (mult != 2)).tolist()
        seam_bad += np.flatnonzero(~screen & (mult != 1)).tolist()
    checks["seam"] = CheckResult(len(seam_bad) == 0, sorted(set(seam_bad))[:20])

    pair_bad = []
    for axis, key in ((0, "x"), (1, "y")):
        pairs = mesh.outer_pairs.get(key, np.zeros((0, 2), dtype=np.int64))
        other = 1 - axis
        lo, hi = mesh.vertices[pairs[:, 0]], mesh.vertices[pairs[:, 1]]
        off = (np.abs(lo[:, other] - hi[:, other]) > 1e-12) | (lo[:, axis] != -0.5) | (hi[:, axis] != 0.5)
        pair_bad += [(key, int(i), int(j)) for i, j in pairs[off]]
        face_lo = np.flatnonzero(mesh.vertices[:, axis] == -0.5)
        face_hi = np.flatnonzero(mesh.vertices[:, axis] == 0.5)
        if (
            len(np.unique(pairs[:, 0])) != len(pairs)
            or len(np.unique(pairs[:, 1])) != len(pairs)
            or set(face_lo) != set(pairs[:, 0].tolist())
            or set(face_hi) != set(pairs[:, 1].tolist())
        ):
            pair_bad.append((key, "not a bijection"))
    checks["outer_pairs"] = CheckResult(len(pair_bad) == 0, pair_bad[:20])

    ang = mesh.min_angles()
    if mesh.hole_radius > 0:
        zone = tip_zone if tip_zone is not None else 4 * mesh.hole_radius
        c = mesh.vertices[mesh.triangles].mean(axis=1)
        d = np.hypot(np.abs(c[:, 0]) - mesh.hole_radius, c[:, 1] - mesh.b / 2)
        near = d < zone
    else:
        near = np.zeros(len(ang), dtype=bool)
    bad_angle = np.flatnonzero((~near & (ang < 15.0)) | (near & (ang < 5.0)))
    checks["quality"] = CheckResult(len(bad_angle) == 0, bad_angle[:20].tolist(), f"min angle {ang.min():.2f} deg")

    ncomp, _ = mesh.components()
    if mesh.b is None or mesh.hole_radius > 0:
        want = 1
    else:
        want = 2
    checks["connectivity"] = CheckResult(ncomp == want, [], f"{ncomp} components, expected {want}")
    return MeshReport(checks)


def cellmesh_text(mesh: CellMesh) -> str:
    """Plain-text export; floats in ``%.16e`` so a read gives back identical bits."""
    f = "%.16e"
    lines = ["cellmesh v1"]
    lines.append("geometry " + ("none" if mesh.b is None else f % mesh.b) + " " + f % mesh.hole_radius)
    lines.append(f"vertices {mesh.n_nodes}")
    lines += [f"{f % x} {f % y}" for x, y in mesh.vertices]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    for name, arr in (
        ("seam_pairs", mesh.seam_pairs),
        ("outer_pairs_x", mesh.outer_pairs["x"]),
        ("outer_pairs_y", mesh.outer_pairs["y"]),
    ):
        lines.append(f"{name} {len(arr)}")
        lines += [f"{i} {j}" for i, j in arr]
    lines.append(f"tips {len(mesh.tip_nodes)}")
    lines += [str(i) for i in mesh.tip_nodes]
    lines.append(f"tags {mesh.n_nodes}")
    lines += [TAG_NAMES[t] for t in mesh.tags]
    return "\n".join(lines) + "\n"


def write_cellmesh(mesh: CellMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(cellmesh_text(mesh))


def read_cellmesh(path) -> CellMesh:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "cellmesh v1":
        raise ParameterError(f"{path}: not a cellmesh v1 file")
    pos = 1

    def section(name):
        nonlocal pos
        head = lines[pos].split()
        if head[0] != name:
            raise ParameterError(f"{path}: expected section {name!r}, found {head[0]!r}")
        count = int(head[1])
        body = lines[pos + 1 : pos + 1 + count]
        pos += 1 + count
        return body

    geo = lines[pos].split()
    pos += 1
    b = None if geo[1] == "none" else float(geo[1])
    r = float(geo[2])
    verts = np.array([[float(v) for v in s.split()] for s in section("vertices")]).reshape(-1, 2)

    def ints(name, width):
        return np.array([[int(v) for v in s.split()] for s in section(name)], dtype=np.int64).reshape(-1, width)

    tri = ints("triangles", 3)
    seam = ints("seam_pairs", 2)
    px = ints("outer_pairs_x", 2)
    py = ints("outer_pairs_y", 2)
    tips = ints("tips", 1).ravel()
    tags = np.array([TAG_NAMES.index(s) for s in section("tags")], dtype=np.int8)
    return CellMesh(verts, tri, seam, {"x": px, "y": py}, tags, b=b, hole_radius=r, tip_nodes=tips)
