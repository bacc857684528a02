"""Snapshot tensors over parameter grids, and tensor primitives.

The snapshot tensor of a problem with D parameters has order D + 2 and
shape (M, N, K_1, ..., K_D): M spatial degrees of freedom, N time steps,
and K_d grid nodes along the d-th parameter axis. All tensors in this
package are stored in Fortran (first-index-fastest) layout so that the
first-mode unfolding is a zero-copy view.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spsla

from .errors import BudgetError, DomainError, FormatError, SolverError
from .fem import Mesh2D, ProblemSpec, TimeGrid, assemble_mass, solve_fom

TENSOR_MAGIC = b"LRT1"
_MAX_ORDER = 64


def resolve_memory_budget(configured: float | None = None) -> float:
    """Memory budget in GiB: LRTDROM_MEM_BUDGET_GB, else ``configured``, else 8."""
    env = os.environ.get("LRTDROM_MEM_BUDGET_GB")
    if env is not None:
        budget = float(env)
    elif configured is not None:
        budget = float(configured)
    else:
        budget = 8.0
    if not budget > 0:
        raise BudgetError(f"memory budget must be positive, got {budget}")
    return budget


def check_budget(n_doubles: int, budget_gb: float, what: str) -> None:
    """Raise BudgetError when ``n_doubles`` float64 values exceed the budget."""
    need = 8 * n_doubles
    if need > budget_gb * 2**30:
        raise BudgetError(
            f"{what} needs {need / 2**30:.2f} GiB, budget is {budget_gb:.2f} GiB"
        )


@dataclass(frozen=True)
class ParameterGrid:
    """Cartesian grid in parameter space, one sorted node array per axis."""

    axes: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        for a in self.axes:
            if a.ndim != 1 or a.size < 1:
                raise ValueError("each grid axis needs at least one node")
            if not np.all(np.diff(a) > 0):
                raise ValueError("grid axis nodes must be strictly increasing")

    @property
    def n_params(self) -> int:
        return len(self.axes)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(a.size for a in self.axes)

    @property
    def box(self) -> tuple[tuple[float, float], ...]:
        return tuple((float(a[0]), float(a[-1])) for a in self.axes)

    @property
    def spacings(self) -> tuple[float, ...]:
        """Mean node spacing per axis (exact spacing for uniform axes)."""
        return tuple(
            float(a[-1] - a[0]) / (a.size - 1) if a.size > 1 else 0.0
            for a in self.axes
        )

    @property
    def n_points(self) -> int:
        return int(np.prod(self.counts))

    def indices(self) -> Iterator[tuple[int, ...]]:
        """Multi-indices in first-axis-fastest order."""
        for flat in range(self.n_points):
            yield tuple(
                int(i) for i in np.unravel_index(flat, self.counts, order="F")
            )

    def point(self, idx: Sequence[int]) -> np.ndarray:
        return np.array([self.axes[d][i] for d, i in enumerate(idx)])

    def points(self) -> np.ndarray:
        """All grid points, shape (n_points, D), first axis fastest."""
        mats = np.meshgrid(*self.axes, indexing="ij")
        return np.column_stack([m.ravel(order="F") for m in mats])


def uniform_grid(
    box: Sequence[tuple[float, float]], counts: Sequence[int]
) -> ParameterGrid:
    """Uniform grid with ``counts[d]`` equispaced nodes spanning ``box[d]``."""
    if len(box) != len(counts):
        raise ValueError("box and counts must have the same length")
    axes = []
    for (lo, hi), k in zip(box, counts):
        if not lo < hi:
            raise ValueError(f"box side [{lo}, {hi}] has non-positive length")
        if int(k) < 1:
            raise ValueError("each axis needs at least one node")
        axes.append(np.linspace(lo, hi, int(k)))
    return ParameterGrid(axes=tuple(axes))


def generate_snapshots(
    problem: ProblemSpec,
    mesh: Mesh2D,
    tg: TimeGrid,
    grid: ParameterGrid,
    workers: int = 1,
    memory_budget_gb: float | None = None,
) -> np.ndarray:
    """Solve the full-order model at every grid node and stack the results.

    Returns the order-(D+2) snapshot tensor in Fortran layout. The fill is
    bitwise deterministic for any worker count: each trajectory is computed
    independently and written to a disjoint slice.
    """
    if grid.n_params != problem.n_params:
        raise DomainError(
            f"grid has {grid.n_params} axes, problem has {problem.n_params} parameters"
        )
    budget = resolve_memory_budget(memory_budget_gb)
    m, n = mesh.n_nodes, tg.steps
    check_budget(m * n * grid.n_points, budget, "snapshot tensor")

    mass = assemble_mass(mesh)
    tensor = np.empty((m, n, *grid.counts), order="F")

    def fill(idx: tuple[int, ...]) -> None:
        traj = solve_fom(problem, mesh, tg, grid.point(idx), mass=mass)
        tensor[(slice(None), slice(None), *idx)] = traj.states

    if workers <= 1:
        for idx in grid.indices():
            fill(idx)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, grid.indices()))
    if not np.isfinite(tensor).all():
        raise SolverError("snapshot generation produced non-finite values")
    return tensor


def frobenius_norm(tensor: np.ndarray) -> float:
    """Frobenius norm of a tensor of any order."""
    return float(np.linalg.norm(np.ravel(tensor, order="K")))


def unfold_first_mode(tensor: np.ndarray) -> np.ndarray:
    """First-mode unfolding, shape (dim_0, prod of the rest).

    For Fortran-contiguous input this is a zero-copy view; column j holds
    the fiber at the j-th multi-index of the trailing modes, trailing
    modes enumerated first-index-fastest.
    """
    return tensor.reshape(tensor.shape[0], -1, order="F")


def max_trajectory_norm(
    tensor: np.ndarray, mass: sp.spmatrix, dt: float
) -> float:
    """Largest discrete space-time norm over the tensor's trajectory slices.

    Each trailing multi-index k fixes a trajectory X_k of shape (M, N);
    the norm is sqrt(dt * max_k sum_n x_n' mass x_n).
    """
    m, n = tensor.shape[0], tensor.shape[1]
    flat = tensor.reshape(m, n, -1, order="F")
    best = 0.0
    for k in range(flat.shape[2]):
        x = flat[:, :, k]
        energy = float(np.sum(x * (mass @ x)))
        best = max(best, energy)
    return float(np.sqrt(dt * best))


def mode_product(tensor: np.ndarray, factor: np.ndarray, mode: int) -> np.ndarray:
    """Contract ``factor`` with ``tensor`` along ``mode``.

    A vector factor of length dim_mode removes that mode. A matrix factor
    of shape (J, dim_mode) replaces the mode's dimension with J.
    """
    f = np.asarray(factor, dtype=float)
    if not 0 <= mode < tensor.ndim:
        raise ValueError(f"mode {mode} out of range for order-{tensor.ndim} tensor")
    if f.ndim == 1:
        return np.tensordot(tensor, f, axes=([mode], [0]))
    if f.ndim == 2:
        out = np.tensordot(f, tensor, axes=([1], [mode]))
        return np.moveaxis(out, 0, mode)
    raise ValueError("factor must be a vector or a matrix")


def spectral_norm(matrix: sp.spmatrix | np.ndarray, tol: float = 1e-6) -> float:
    """Largest singular value, accurate to ``tol`` relative.

    Small matrices are handled by a dense SVD; larger ones by ARPACK with
    a fixed starting vector, so the result is deterministic. Plain power
    iteration is avoided: the FE mass matrices this is used on have tight
    top eigenvalue clusters where it stalls.
    """
    rows, cols = matrix.shape
    nnz = matrix.nnz if sp.issparse(matrix) else np.count_nonzero(matrix)
    if nnz == 0:
        return 0.0
    if min(rows, cols) < 16:
        dense = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix)
        vals = np.linalg.svd(dense, compute_uv=False)
        return float(vals[0])
    v0 = np.ones(min(rows, cols))
    vals = spsla.svds(matrix, k=1, tol=tol, v0=v0, return_singular_vectors=False)
    return float(vals[0])


def save_tensor(path: str | os.PathLike, tensor: np.ndarray) -> None:
    """Write a tensor in the package's binary layout.

    Layout: magic "LRT1", uint32 order, uint32 dims, float64 payload in
    first-index-fastest order, all little-endian.
    """
    tensor = np.asarray(tensor, dtype=np.float64)
    with open(path, "wb") as f:
        f.write(TENSOR_MAGIC)
        np.asarray([tensor.ndim], dtype="<u4").tofile(f)
        np.asarray(tensor.shape, dtype="<u4").tofile(f)
        np.ravel(tensor, order="F").astype("<f8", copy=False).tofile(f)


def _read_exact(f, count: int, dtype: str, what: str) -> np.ndarray:
    data = np.fromfile(f, dtype=dtype, count=count)
    if data.size != count:
        raise FormatError(f"truncated file while reading {what}")
    return data


def load_tensor(path: str | os.PathLike) -> np.ndarray:
    """Read a tensor written by :func:`save_tensor`."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != TENSOR_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {TENSOR_MAGIC!r}")
        order = int(_read_exact(f, 1, "<u4", "order")[0])
        if not 1 <= order <= _MAX_ORDER:
            raise FormatError(f"implausible tensor order {order}")
        dims = _read_exact(f, order, "<u4", "dims").astype(np.int64)
        if np.any(dims < 1):
            raise FormatError(f"non-positive dimension in {tuple(dims)}")
        payload = _read_exact(f, int(np.prod(dims)), "<f8", "payload")
        if f.read(1) != b"":
            raise FormatError("trailing bytes after tensor payload")
    return payload.astype(np.float64).reshape(tuple(dims), order="F")
