"""Full-order model: P1 finite elements on structured triangulations.

The spatial domains are axis-aligned rectangles with optional axis-aligned
rectangular holes. Meshes are structured: the outer rectangle is divided
into square cells of a common size, cells covered by a hole are removed,
and every remaining cell is split into two right triangles. All boundary
conditions are natural (Robin or zero Neumann), so the FE space carries
every mesh node.

Two parametric problems are configured here. ``heat`` is a pure diffusion
equation on a 10 x 4 plate with three square holes, with a Robin exchange
condition on part of the outer boundary (coefficient alpha_1, exterior
value 1) and on the hole boundaries (coefficient 1/2, exterior value
alpha_2). ``advdiff`` is an advection-diffusion equation on the unit
square with a fixed Gaussian source and a five-parameter divergence-free
velocity field.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import AssemblyError, DomainError, GeometryError, SolverError

Rect = tuple[float, float, float, float]


class BoundaryTag:
    """Integer tags carried by boundary edges.

    ``NEUMANN`` marks zero-flux edges, ``OUTER_ROBIN`` the Robin part of
    the outer boundary, and ``hole(j)`` the boundary of the j-th hole.
    """

    NEUMANN = 0
    OUTER_ROBIN = 1
    _HOLE_BASE = 2

    @staticmethod
    def hole(j: int) -> int:
        return BoundaryTag._HOLE_BASE + j

    @staticmethod
    def is_hole(tag: int) -> bool:
        return tag >= BoundaryTag._HOLE_BASE

    @staticmethod
    def hole_index(tag: int) -> int:
        if not BoundaryTag.is_hole(tag):
            raise ValueError(f"tag {tag} is not a hole tag")
        return tag - BoundaryTag._HOLE_BASE


@dataclass(frozen=True)
class ProblemSpec:
    """Geometry, coefficients, and parameter box of one parametric problem.

    ``box`` lists one (min, max) pair per parameter. ``robin_side`` names
    the outer-rectangle side carrying the Robin condition ("left", "right",
    "bottom", "top") or is None when the whole outer boundary is zero-flux.
    """

    kind: str
    outer: Rect
    holes: tuple[Rect, ...]
    box: tuple[tuple[float, float], ...]
    final_time: float
    nu: float = 1.0
    robin_side: str | None = None
    source_center: tuple[float, float] = (0.25, 0.25)
    source_width: float = 0.05
    initial_condition: str = "zero"

    def __post_init__(self) -> None:
        if self.kind not in ("heat", "advdiff"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        for lo, hi in self.box:
            if not lo < hi:
                raise ValueError("parameter box sides must have positive length")
        if self.kind == "advdiff" and not self.nu > 0:
            raise ValueError("diffusion coefficient must be positive")

    @property
    def n_params(self) -> int:
        return len(self.box)


def heat_problem() -> ProblemSpec:
    """Heat exchange on [0,10]x[0,4] minus three unit-square holes."""
    holes = tuple((cx - 0.5, 1.5, cx + 0.5, 2.5) for cx in (2.5, 5.0, 7.5))
    return ProblemSpec(
        kind="heat",
        outer=(0.0, 0.0, 10.0, 4.0),
        holes=holes,
        box=((0.01, 0.501), (0.0, 0.9)),
        final_time=20.0,
        robin_side="left",
    )


def advdiff_problem() -> ProblemSpec:
    """Advection-diffusion with a Gaussian source on the unit square."""
    return ProblemSpec(
        kind="advdiff",
        outer=(0.0, 0.0, 1.0, 1.0),
        holes=(),
        box=((-0.1, 0.1),) * 5,
        final_time=1.0,
        nu=1.0 / 30.0,
    )


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with ``steps`` intervals of size ``final_time/steps``."""

    final_time: float
    steps: int

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("need at least one time step")
        if not self.final_time > 0:
            raise ValueError("final time must be positive")

    @property
    def dt(self) -> float:
        return self.final_time / self.steps

    def times(self) -> np.ndarray:
        """Time levels t_1 .. t_N (the initial time 0 is not included)."""
        return np.arange(1, self.steps + 1) * self.dt


@dataclass(frozen=True)
class Mesh2D:
    """Structured triangulation. ``h`` is the realized maximum element diameter.

    ``cell`` is the square cell size the construction snapped to; each cell
    contributes two congruent right triangles, so h = cell * sqrt(2).
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    h: float
    cell: float

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]


def _snap_cell_size(problem: ProblemSpec, h: float) -> tuple[float, int, int]:
    """Largest cell size <= h that tiles the outer rectangle and hole edges."""
    x0, y0, x1, y1 = problem.outer
    width, height = x1 - x0, y1 - y0

    def divides(value: float, c: float) -> bool:
        q = value / c
        return abs(q - round(q)) <= 1e-9 * max(1.0, abs(q))

    nx_min = int(np.ceil(width / h - 1e-9))
    for nx in range(max(nx_min, 1), max(nx_min, 1) + 100_000):
        c = width / nx
        if not divides(height, c):
            continue
        edges = []
        for hx0, hy0, hx1, hy1 in problem.holes:
            edges += [hx0 - x0, hx1 - x0, hy0 - y0, hy1 - y0]
        if all(divides(v, c) for v in edges):
            return c, nx, round(height / c)
    raise GeometryError(
        f"no cell size <= {h} tiles the domain and hole boundaries evenly"
    )


def build_mesh(problem: ProblemSpec, h: float) -> Mesh2D:
    """Triangulate the problem domain with target cell size ``h``.

    The realized cell size is ``h`` snapped down to the nearest value that
    divides the outer rectangle and aligns every hole edge with a grid
    line. Cells inside holes are removed; boundary edges are tagged with
    the problem's Robin segments.
    """
    if not h > 0:
        raise GeometryError("mesh size must be positive")
    x0, y0, x1, y1 = problem.outer
    if not (x0 < x1 and y0 < y1):
        raise GeometryError("outer rectangle is degenerate")
    for hx0, hy0, hx1, hy1 in problem.holes:
        if not (hx0 < hx1 and hy0 < hy1):
            raise GeometryError("hole rectangle is degenerate")
        if hx0 <= x0 or hx1 >= x1 or hy0 <= y0 or hy1 >= y1:
            raise GeometryError("hole rectangle must be strictly inside the domain")
    for i, a in enumerate(problem.holes):
        for b in problem.holes[i + 1 :]:
            if a[0] <= b[2] and b[0] <= a[2] and a[1] <= b[3] and b[1] <= a[3]:
                raise GeometryError("hole rectangles must be pairwise disjoint")

    c, nx, ny = _snap_cell_size(problem, h)

    # Hole footprints in cell-index space (exact integers by construction).
    hole_cells = []
    for hx0, hy0, hx1, hy1 in problem.holes:
        hole_cells.append(
            (
                round((hx0 - x0) / c),
                round((hy0 - y0) / c),
                round((hx1 - x0) / c),
                round((hy1 - y0) / c),
            )
        )

    keep = np.ones((nx, ny), dtype=bool)
    for ilo, jlo, ihi, jhi in hole_cells:
        keep[ilo:ihi, jlo:jhi] = False
    if not keep.any():
        raise GeometryError("holes cover the whole domain")

    # A node survives when at least one adjacent cell survives.
    node_keep = np.zeros((nx + 1, ny + 1), dtype=bool)
    node_keep[:-1, :-1] |= keep
    node_keep[1:, :-1] |= keep
    node_keep[:-1, 1:] |= keep
    node_keep[1:, 1:] |= keep

    new_id = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    order = np.argwhere(node_keep)  # sorted by (ix, iy)
    new_id[order[:, 0], order[:, 1]] = np.arange(order.shape[0])

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    nodes = np.column_stack([xs[order[:, 0]], ys[order[:, 1]]])

    ci, cj = np.nonzero(keep)
    ll = new_id[ci, cj]
    lr = new_id[ci + 1, cj]
    ur = new_id[ci + 1, cj + 1]
    ul = new_id[ci, cj + 1]
    lower = np.column_stack([ll, lr, ur])
    upper = np.column_stack([ll, ur, ul])
    triangles = np.vstack([lower, upper]).astype(np.int64)

    # Boundary edges appear in exactly one triangle.
    edges = np.vstack(
        [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
    )
    edges_sorted = np.sort(edges, axis=1)
    uniq, counts = np.unique(edges_sorted, axis=0, return_counts=True)
    boundary_edges = uniq[counts == 1]

    grid_of = {int(new_id[i, j]): (int(i), int(j)) for i, j in order}
    side_checks = {
        "left": lambda i, j: i == 0,
        "right": lambda i, j: i == nx,
        "bottom": lambda i, j: j == 0,
        "top": lambda i, j: j == ny,
    }

    def on_hole(idx: int, i: int, j: int) -> bool:
        ilo, jlo, ihi, jhi = hole_cells[idx]
        inside = ilo <= i <= ihi and jlo <= j <= jhi
        on_rim = i in (ilo, ihi) or j in (jlo, jhi)
        return inside and on_rim

    tags = np.zeros(boundary_edges.shape[0], dtype=np.int64)
    robin = side_checks.get(problem.robin_side) if problem.robin_side else None
    for e, (a, b) in enumerate(boundary_edges):
        ga, gb = grid_of[int(a)], grid_of[int(b)]
        tagged = False
        for k in range(len(hole_cells)):
            if on_hole(k, *ga) and on_hole(k, *gb):
                tags[e] = BoundaryTag.hole(k)
                tagged = True
                break
        if not tagged and robin is not None and robin(*ga) and robin(*gb):
            tags[e] = BoundaryTag.OUTER_ROBIN

    mesh = Mesh2D(
        nodes=nodes,
        triangles=triangles,
        boundary_edges=boundary_edges,
        edge_tags=tags,
        h=c * np.sqrt(2.0),
        cell=c,
    )
    _, area = _triangle_geometry(mesh)
    if np.any(area <= 0):
        raise GeometryError("triangulation produced non-positive areas")
    return mesh


def _triangle_geometry(mesh: Mesh2D) -> tuple[np.ndarray, np.ndarray]:
    """Vertex coordinates (T,3,2) and signed areas (T,) of all triangles."""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    return p, area


def _gradient_coefficients(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients b, c with grad(phi_k) = (b_k, c_k) / (2 area)."""
    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return b, c


def _scatter(mesh: Mesh2D, local: np.ndarray) -> sp.csr_matrix:
    """Scatter per-triangle 3x3 blocks into a CSR matrix."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).reshape(-1)
    cols = np.tile(tri, (1, 3)).reshape(-1)
    mat = sp.coo_matrix(
        (local.reshape(-1), (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)
    )
    return mat.tocsr()


def assemble_mass(mesh: Mesh2D) -> sp.csr_matrix:
    """Exact P1 mass matrix (element rule (area/12)*[[2,1,1],[1,2,1],[1,1,2]])."""
    _, area = _triangle_geometry(mesh)
    if np.any(area <= 0):
        raise AssemblyError("degenerate triangle encountered in mass assembly")
    base = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    local = area[:, None, None] * base
    return _scatter(mesh, local)


def assemble_stiffness(mesh: Mesh2D) -> sp.csr_matrix:
    """Exact P1 stiffness matrix (integral of grad phi_i . grad phi_j)."""
    p, area = _triangle_geometry(mesh)
    if np.any(area <= 0):
        raise AssemblyError("degenerate triangle encountered in stiffness assembly")
    b, c = _gradient_coefficients(p)
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (
        4.0 * area
    )[:, None, None]
    return _scatter(mesh, local)


def assemble_h1_gram(mesh: Mesh2D) -> sp.csr_matrix:
    """H1 Gram matrix: stiffness plus mass."""
    return (assemble_stiffness(mesh) + assemble_mass(mesh)).tocsr()


def _selected_edges(mesh: Mesh2D, tags: set[int]) -> np.ndarray:
    mask = np.isin(mesh.edge_tags, list(tags))
    return mesh.boundary_edges[mask]


def boundary_mass(mesh: Mesh2D, tags: set[int]) -> sp.csr_matrix:
    """Edge mass matrix over boundary edges carrying one of ``tags``.

    Exact P1 edge rule: (length/6) * [[2,1],[1,2]] per edge.
    """
    edges = _selected_edges(mesh, tags)
    n = mesh.n_nodes
    if edges.shape[0] == 0:
        return sp.csr_matrix((n, n))
    length = np.linalg.norm(
        mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1
    )
    base = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    local = length[:, None, None] * base
    rows = np.repeat(edges, 2, axis=1).reshape(-1)
    cols = np.tile(edges, (1, 2)).reshape(-1)
    return sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()


def boundary_load(mesh: Mesh2D, tags: set[int]) -> np.ndarray:
    """Load vector of a unit boundary source on edges carrying ``tags``.

    Exact for P1: each endpoint of an edge receives length/2.
    """
    edges = _selected_edges(mesh, tags)
    g = np.zeros(mesh.n_nodes)
    if edges.shape[0] == 0:
        return g
    length = np.linalg.norm(
        mesh.nodes[edges[:, 1]] - mesh.nodes[edges[:, 0]], axis=1
    )
    np.add.at(g, edges[:, 0], 0.5 * length)
    np.add.at(g, edges[:, 1], 0.5 * length)
    return g


def advection_field(x: np.ndarray, alpha: Sequence[float]) -> np.ndarray:
    """Velocity field of the advection-diffusion problem at points ``x``.

    A constant unit drift at 45 degrees plus the curl of a five-mode cosine
    stream function; divergence-free by construction. ``x`` has shape
    (..., 2); the result matches.
    """
    a1, a2, a3, a4, a5 = (float(a) for a in alpha)
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    base = np.cos(np.pi / 4.0)
    e1 = (
        base
        - a2 * np.sin(np.pi * x2)
        - a3 * np.cos(np.pi * x1) * np.sin(np.pi * x2)
        - 2.0 * a5 * np.sin(2.0 * np.pi * x2)
    )
    e2 = (
        base
        + a1 * np.sin(np.pi * x1)
        + a3 * np.sin(np.pi * x1) * np.cos(np.pi * x2)
        + 2.0 * a4 * np.sin(2.0 * np.pi * x1)
    )
    return np.stack([e1, e2], axis=-1)


def check_alpha(problem: ProblemSpec, alpha: Sequence[float]) -> np.ndarray:
    """Validate the shape and finiteness of a parameter vector.

    Box membership is deliberately not enforced here: the operator is a
    well-posed PDE for any coefficient values, and the parameter box only
    constrains where snapshots are sampled and interpolated.
    """
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (problem.n_params,):
        raise DomainError(
            f"expected {problem.n_params} parameters, got shape {alpha.shape}"
        )
    if not np.all(np.isfinite(alpha)):
        raise DomainError("parameter vector must be finite")
    return alpha


def source_values(x: np.ndarray, problem: ProblemSpec) -> np.ndarray:
    """Gaussian source density at points ``x`` (shape (..., 2))."""
    sx, sy = problem.source_center
    s2 = problem.source_width**2
    x = np.asarray(x, dtype=float)
    r2 = (x[..., 0] - sx) ** 2 + (x[..., 1] - sy) ** 2
    return np.exp(-r2 / (2.0 * s2)) / (2.0 * np.pi * s2)


def _assemble_advection(
    mesh: Mesh2D, problem: ProblemSpec, alpha: np.ndarray
) -> sp.csr_matrix:
    """Advection matrix with one-point (centroid) quadrature per triangle."""
    p, area = _triangle_geometry(mesh)
    b, c = _gradient_coefficients(p)
    centroids = p.mean(axis=1)
    eta = advection_field(centroids, alpha)
    # (eta . grad phi_j) is constant per triangle; phi_i(centroid) = 1/3.
    conv = (eta[:, 0:1] * b + eta[:, 1:2] * c) / (2.0 * area)[:, None]
    local = (area[:, None, None] / 3.0) * conv[:, None, :]
    local = np.broadcast_to(local, (len(area), 3, 3))
    return _scatter(mesh, np.ascontiguousarray(local))


def assemble_load(mesh: Mesh2D, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Load vector of a volumetric source, one-point centroid quadrature.

    ``fn`` maps an array of points (..., 2) to source densities (...).
    """
    p, area = _triangle_geometry(mesh)
    centroids = p.mean(axis=1)
    f = np.asarray(fn(centroids), dtype=float)
    g = np.zeros(mesh.n_nodes)
    contrib = np.broadcast_to((area * f / 3.0)[:, None], mesh.triangles.shape)
    np.add.at(g, mesh.triangles, contrib)
    return g


def assemble_operator(
    mesh: Mesh2D, problem: ProblemSpec, alpha: Sequence[float]
) -> tuple[sp.csr_matrix, np.ndarray]:
    """Spatial operator A(alpha) and load vector g(alpha).

    heat:    A = stiffness + alpha_1 * outer Robin edge mass
                 + 1/2 * hole edge mass;
             g = alpha_1 * outer Robin edge load
                 + 1/2 * alpha_2 * hole edge load.
    advdiff: A = nu * stiffness + advection (centroid rule);
             g = Gaussian source load (centroid rule).
    """
    alpha = check_alpha(problem, alpha)
    if problem.kind == "heat":
        a1, a2 = alpha
        hole_set = {BoundaryTag.hole(j) for j in range(len(problem.holes))}
        op = assemble_stiffness(mesh)
        op = op + a1 * boundary_mass(mesh, {BoundaryTag.OUTER_ROBIN})
        op = op + 0.5 * boundary_mass(mesh, hole_set)
        load = a1 * boundary_load(mesh, {BoundaryTag.OUTER_ROBIN})
        load += 0.5 * a2 * boundary_load(mesh, hole_set)
        return op.tocsr(), load
    op = problem.nu * assemble_stiffness(mesh) + _assemble_advection(
        mesh, problem, alpha
    )
    return op.tocsr(), assemble_load(mesh, lambda x: source_values(x, problem))


@dataclass(frozen=True)
class FomTrajectory:
    """Columns u^1 .. u^N of nodal coefficients (the initial state excluded)."""

    states: np.ndarray
    tg: TimeGrid
    alpha: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.states.shape[1] != self.tg.steps:
            raise ValueError("trajectory column count must equal the step count")


def backward_euler_solve(
    mass: sp.spmatrix,
    op: sp.spmatrix,
    load: np.ndarray | Callable[[float], np.ndarray],
    u0: np.ndarray,
    tg: TimeGrid,
    alpha: np.ndarray | None = None,
) -> FomTrajectory:
    """March (M + dt A) u^n = M u^{n-1} + dt g(t_n) for n = 1..N.

    The sparse factorization of (M + dt A) is computed once and reused.
    ``load`` is a fixed vector for autonomous problems or a callable
    t -> vector (the hook used by manufactured-solution tests).
    """
    dt = tg.dt
    system = (mass + dt * op).tocsc()
    try:
        lu = splu(system)
    except RuntimeError as exc:
        raise SolverError(f"time-step system factorization failed: {exc}") from exc
    pivots = np.abs(lu.U.diagonal())
    if pivots.min() <= 1e-14 * pivots.max():
        raise SolverError(
            "time-step system numerically singular: pivot ratio "
            f"{pivots.min() / pivots.max():.3e}"
        )
    u = np.asarray(u0, dtype=float)
    if u.shape != (mass.shape[0],):
        raise SolverError("initial state has wrong dimension")
    states = np.empty((u.size, tg.steps), order="F")
    time_dependent = callable(load)
    if not time_dependent:
        scaled = dt * np.asarray(load, dtype=float)
    for n, t in enumerate(tg.times()):
        rhs = mass @ u
        rhs += dt * load(t) if time_dependent else scaled
        u = lu.solve(rhs)
        states[:, n] = u
    return FomTrajectory(states=states, tg=tg, alpha=alpha)


def initial_state(problem: ProblemSpec, mesh: Mesh2D) -> np.ndarray:
    """Nodal coefficients of the problem's initial condition."""
    if problem.initial_condition != "zero":
        raise ValueError(
            f"unknown initial condition {problem.initial_condition!r}"
        )
    return np.zeros(mesh.n_nodes)


def solve_fom(
    problem: ProblemSpec,
    mesh: Mesh2D,
    tg: TimeGrid,
    alpha: Sequence[float],
    mass: sp.spmatrix | None = None,
) -> FomTrajectory:
    """Assemble and time-step the full-order model at one parameter value."""
    if mass is None:
        mass = assemble_mass(mesh)
    op, load = assemble_operator(mesh, problem, alpha)
    u0 = initial_state(problem, mesh)
    return backward_euler_solve(mass, op, load, u0, tg, alpha=np.asarray(alpha, float))
