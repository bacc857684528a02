"""Tensor-train decomposition and in-tensor parameter interpolation.

A tensor train represents an order-d tensor by d cores; core k has shape
(r_{k-1}, dim_k, r_k) with r_0 = r_d = 1. The decomposition here keeps
the cores left-orthogonal, so the first core doubles as an orthonormal
basis for the span of all snapshots. Parameter queries never rebuild the
full tensor: weight vectors are contracted directly with the parameter
cores, which turns a compressed snapshot tensor into a cheap map from a
parameter value to a local coefficient matrix.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import DomainError, FormatError
from .interp import WeightVector
from .tensors import (
    check_budget,
    frobenius_norm,
    max_trajectory_norm,
    resolve_memory_budget,
    spectral_norm,
    unfold_first_mode,
)

TT_MAGIC = b"LRTT"
_MAX_ORDER = 64

# Trailing singular values at roundoff level relative to the largest one
# carry no information; keeping them would inflate ranks of exactly
# low-rank inputs.
_ROUNDOFF_FLOOR = 64.0 * np.finfo(np.float64).eps


@dataclass(frozen=True)
class TTTensor:
    """Tensor train: cores[k] has shape (ranks[k-1], dims[k], ranks[k])."""

    cores: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not self.cores:
            raise ValueError("tensor train needs at least one core")
        r_prev = 1
        for k, core in enumerate(self.cores):
            if core.ndim != 3:
                raise ValueError(f"core {k} must be a 3-way array")
            if core.shape[0] != r_prev:
                raise ValueError(
                    f"core {k} left rank {core.shape[0]} does not match {r_prev}"
                )
            r_prev = core.shape[2]
        if r_prev != 1:
            raise ValueError("last core must have right rank 1")

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(core.shape[1] for core in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        """Interior ranks r_1 .. r_{d-1}."""
        return tuple(core.shape[2] for core in self.cores[:-1])

    @property
    def n_entries(self) -> int:
        return int(np.prod(self.dims))


@dataclass(frozen=True)
class CompressionReport:
    """What the decomposition kept and what it threw away.

    ``discarded_energy[k]`` is the sum of squared singular values dropped
    at the k-th unfolding; the total reconstruction error is bounded by
    ``error_bound``.
    """

    eps_tilde: float
    tensor_norm: float
    ranks: tuple[int, ...]
    discarded_energy: tuple[float, ...]

    @property
    def error_bound(self) -> float:
        return float(np.sqrt(sum(self.discarded_energy)))


def frobenius_tolerance(
    eps: float, tensor: np.ndarray, mass: sp.spmatrix, dt: float
) -> float:
    """Convert a trajectory-norm tolerance into a relative Frobenius one.

    eps bounds the worst trajectory error in the discrete space-time norm;
    the returned value bounds the relative Frobenius error of the full
    tensor that guarantees it:

        eps_tilde = eps * norm0 / (sqrt(|mass| * dt) * |tensor|_F)

    with norm0 the largest trajectory norm and |mass| the spectral norm.
    """
    if eps < 0:
        raise ValueError("tolerance must be non-negative")
    fro = frobenius_norm(tensor)
    if fro == 0.0:
        raise DomainError("tolerance conversion undefined for a zero tensor")
    if eps == 0.0:
        return 0.0
    norm0 = max_trajectory_norm(tensor, mass, dt)
    return eps * norm0 / (np.sqrt(spectral_norm(mass) * dt) * fro)


def _select_rank(s: np.ndarray, budget: float) -> tuple[int, float]:
    """Smallest kept rank whose discarded tail energy stays under budget^2.

    Ties at exactly zero tail always qualify, so a zero budget keeps all
    nonzero singular values. Trailing values at roundoff level relative to
    s[0] are dropped regardless. Returns (rank, discarded energy).
    """
    q = s.size
    tails = np.zeros(q + 1)
    tails[:q] = np.cumsum((s**2)[::-1])[::-1]
    mask = (tails < budget**2) | (tails == 0.0)
    r = int(np.argmax(mask))  # mask[q] is always True
    significant = int(np.count_nonzero(s > _ROUNDOFF_FLOOR * s[0])) if q else 0
    r = max(1, min(r, max(significant, 1)))
    return r, float(tails[r])


def tt_svd(tensor: np.ndarray, eps_tilde: float) -> tuple[TTTensor, CompressionReport]:
    """Tensor-train decomposition with relative Frobenius tolerance.

    Sequential truncated SVDs of the unfoldings, each allowed a discarded
    energy of (eps_tilde * |tensor|_F)^2 / (d - 1), which guarantees
    |tensor - result|_F <= eps_tilde * |tensor|_F. All cores except the
    last are left-orthogonal. eps_tilde = 0 reproduces the tensor to
    roundoff with minimal exact ranks.
    """
    if eps_tilde < 0:
        raise ValueError("tolerance must be non-negative")
    tensor = np.asarray(tensor, dtype=np.float64)
    d = tensor.ndim
    dims = tensor.shape
    if d == 1:
        core = tensor.reshape(1, dims[0], 1, order="F")
        return TTTensor(cores=(core,)), CompressionReport(
            eps_tilde=eps_tilde,
            tensor_norm=frobenius_norm(tensor),
            ranks=(),
            discarded_energy=(),
        )
    norm = frobenius_norm(tensor)
    budget = eps_tilde * norm / np.sqrt(d - 1)

    cores: list[np.ndarray] = []
    discarded: list[float] = []
    w = unfold_first_mode(tensor)
    r_prev = 1
    for k in range(d - 1):
        w = w.reshape(r_prev * dims[k], -1, order="F")
        u, s, vt = sla.svd(
            w, full_matrices=False, lapack_driver="gesdd", check_finite=False
        )
        r, dropped = _select_rank(s, budget)
        cores.append(u[:, :r].reshape(r_prev, dims[k], r, order="F"))
        discarded.append(dropped)
        w = s[:r, None] * vt[:r]
        r_prev = r
    cores.append(w.reshape(r_prev, dims[-1], 1, order="F"))
    tt = TTTensor(cores=tuple(cores))
    report = CompressionReport(
        eps_tilde=eps_tilde,
        tensor_norm=norm,
        ranks=tt.ranks,
        discarded_energy=tuple(discarded),
    )
    return tt, report


def tt_to_full(tt: TTTensor, memory_budget_gb: float | None = None) -> np.ndarray:
    """Contract all cores back into the full tensor (Fortran layout)."""
    budget = resolve_memory_budget(memory_budget_gb)
    check_budget(2 * tt.n_entries, budget, "tensor-train expansion")
    w = np.ones((1, 1))
    for core in tt.cores:
        r_prev, n, r = core.shape
        w = w @ core.reshape(r_prev, n * r, order="F")
        w = w.reshape(-1, r, order="F")
    return w.reshape(tt.dims, order="F")


def universal_basis(tt: TTTensor, tol: float = 1e-13) -> np.ndarray:
    """First core as an orthonormal basis of the joint snapshot space.

    Shape (dim_0, r_1). Raises ValueError when the core's columns are not
    orthonormal to within ``tol`` (the train was not built left-orthogonal).
    """
    u = tt.cores[0][0]
    gram = u.T @ u
    defect = float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
    if defect > tol:
        raise ValueError(
            f"first core is not left-orthogonal (defect {defect:.3e} > {tol:.1e})"
        )
    return u


def _as_weight_array(w: WeightVector | np.ndarray) -> np.ndarray:
    values = w.values if isinstance(w, WeightVector) else w
    return np.asarray(values, dtype=float)


def _contract_parameter_cores(
    tt: TTTensor, weights: Sequence[WeightVector | np.ndarray]
) -> np.ndarray:
    """Collapse cores 2..d-1 with one weight vector each; returns an r_2 vector."""
    d = tt.order
    if d < 3:
        raise ValueError("tensor train has no parameter modes")
    if len(weights) != d - 2:
        raise ValueError(f"expected {d - 2} weight vectors, got {len(weights)}")
    v = np.ones(1)
    for k in range(d - 1, 1, -1):
        chi = _as_weight_array(weights[k - 2])
        core = tt.cores[k]
        if chi.shape != (core.shape[1],):
            raise ValueError(
                f"weight vector {k - 2} has length {chi.shape[0]}, "
                f"axis has {core.shape[1]} nodes"
            )
        # Collapse the mode, then absorb everything to the right.
        v = np.tensordot(core, chi, axes=([1], [0])) @ v
    return v


def interpolate_coefficients(
    tt: TTTensor, weights: Sequence[WeightVector | np.ndarray]
) -> np.ndarray:
    """Local coefficient matrix of one parameter value, shape (r_1, dim_1).

    Columns are time steps; the interpolated trajectory is the first core
    applied to this matrix. The cost depends on the ranks and the stencil
    sizes only, never on the full grid size.
    """
    v = _contract_parameter_cores(tt, weights)
    return np.tensordot(tt.cores[1], v, axes=([2], [0]))


def interpolate_snapshots(
    tt: TTTensor, weights: Sequence[WeightVector | np.ndarray]
) -> np.ndarray:
    """Interpolated trajectory at one parameter value, shape (dim_0, dim_1)."""
    return tt.cores[0][0] @ interpolate_coefficients(tt, weights)


def save_tt(path: str | os.PathLike, tt: TTTensor) -> None:
    """Write a tensor train in the package's binary layout.

    Layout: magic "LRTT", uint32 order, uint32 dims, uint32 interior
    ranks, then each core as float64 in first-index-fastest order, all
    little-endian.
    """
    with open(path, "wb") as f:
        f.write(TT_MAGIC)
        np.asarray([tt.order], dtype="<u4").tofile(f)
        np.asarray(tt.dims, dtype="<u4").tofile(f)
        np.asarray(tt.ranks, dtype="<u4").tofile(f)
        for core in tt.cores:
            np.ravel(core, order="F").astype("<f8", copy=False).tofile(f)


def load_tt(path: str | os.PathLike) -> TTTensor:
    """Read a tensor train written by :func:`save_tt`."""
    from .tensors import _read_exact

    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != TT_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {TT_MAGIC!r}")
        order = int(_read_exact(f, 1, "<u4", "order")[0])
        if not 1 <= order <= _MAX_ORDER:
            raise FormatError(f"implausible tensor order {order}")
        dims = _read_exact(f, order, "<u4", "dims").astype(np.int64)
        if np.any(dims < 1):
            raise FormatError(f"non-positive dimension in {tuple(dims)}")
        ranks = _read_exact(f, order - 1, "<u4", "ranks").astype(np.int64)
        if np.any(ranks < 1):
            raise FormatError(f"non-positive rank in {tuple(ranks)}")
        full_ranks = np.concatenate([[1], ranks, [1]])
        cores = []
        for k in range(order):
            shape = (int(full_ranks[k]), int(dims[k]), int(full_ranks[k + 1]))
            payload = _read_exact(f, int(np.prod(shape)), "<f8", f"core {k}")
            cores.append(payload.astype(np.float64).reshape(shape, order="F"))
        if f.read(1) != b"":
            raise FormatError("trailing bytes after tensor-train payload")
    return TTTensor(cores=tuple(cores))
