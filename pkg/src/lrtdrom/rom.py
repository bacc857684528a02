"""Parameter-local reduced bases and the Galerkin reduced-order model.

The reduced space at a parameter value is built from the compressed
snapshot tensor alone: the interpolated coefficient matrix is small
(first tensor-train rank by time steps), its left singular vectors pick
the dominant directions, and lifting them through the first core gives
an orthonormal spatial basis. The reduced systems are dense and tiny, so
every factorization here is a dense one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import SolverError
from .fem import FomTrajectory, TimeGrid
from .interp import WeightVector
from .tt import TTTensor, interpolate_coefficients, universal_basis

_RANK_CUTOFF = 1e-14


@dataclass(frozen=True)
class LocalBasis:
    """Orthonormal reduced basis attached to one parameter value."""

    basis: np.ndarray
    singular_values: np.ndarray
    alpha: np.ndarray | None = None

    @property
    def ell(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class RomTrajectory:
    """Reduced coefficients c^1 .. c^N, one column per time step."""

    coefficients: np.ndarray
    basis: LocalBasis
    tg: TimeGrid

    def lift(self) -> np.ndarray:
        """States in the full space, shape (M, N)."""
        return self.basis.basis @ self.coefficients


def local_basis(
    tt: TTTensor,
    weights: Sequence[WeightVector | np.ndarray],
    ell: int,
    alpha: np.ndarray | None = None,
) -> LocalBasis:
    """Reduced basis of size ``ell`` at the parameter value behind ``weights``.

    Left singular vectors of the interpolated coefficient matrix, lifted
    through the (orthonormal) first core. ``ell`` may not exceed the
    first rank or the number of time steps.
    """
    coeff = interpolate_coefficients(tt, weights)
    r1, n = coeff.shape
    if not 1 <= ell <= min(r1, n):
        raise ValueError(
            f"basis size {ell} not in [1, {min(r1, n)}] "
            f"(first rank {r1}, {n} time steps)"
        )
    u, s, _ = sla.svd(coeff, full_matrices=False, check_finite=False)
    basis = universal_basis(tt) @ u[:, :ell]
    return LocalBasis(basis=basis, singular_values=s, alpha=alpha)


def rom_solve(
    basis: LocalBasis,
    mass: sp.spmatrix,
    op: sp.spmatrix,
    load: np.ndarray | Callable[[float], np.ndarray],
    u0: np.ndarray,
    tg: TimeGrid,
) -> RomTrajectory:
    """Galerkin projection of the implicit Euler march onto the basis.

    The initial coefficient vector is the mass-weighted projection of
    ``u0``. The reduced time-step system is factored once (dense LU).
    """
    s = basis.basis
    mass_r = s.T @ (mass @ s)
    op_r = s.T @ (op @ s)
    dt = tg.dt
    system = mass_r + dt * op_r
    try:
        lu, piv = sla.lu_factor(system, check_finite=False)
    except ValueError as exc:
        raise SolverError(f"reduced system factorization failed: {exc}") from exc
    diag = np.abs(np.diag(lu))
    if diag.min() <= 1e-14 * diag.max():
        raise SolverError("reduced time-step system numerically singular")

    try:
        mass_factor = sla.lu_factor(mass_r, check_finite=False)
    except ValueError as exc:
        raise SolverError(f"reduced mass factorization failed: {exc}") from exc
    c = sla.lu_solve(mass_factor, s.T @ (mass @ np.asarray(u0, dtype=float)))
    time_dependent = callable(load)
    if not time_dependent:
        load_r = dt * (s.T @ np.asarray(load, dtype=float))
    coeffs = np.empty((s.shape[1], tg.steps), order="F")
    for n, t in enumerate(tg.times()):
        rhs = mass_r @ c
        rhs += dt * (s.T @ load(t)) if time_dependent else load_r
        c = sla.lu_solve((lu, piv), rhs, check_finite=False)
        coeffs[:, n] = c
    return RomTrajectory(coefficients=coeffs, basis=basis, tg=tg)


def correlation_spectrum(
    states: np.ndarray | FomTrajectory, mass: sp.spmatrix
) -> np.ndarray:
    """Eigenvalues of the time-averaged correlation operator, descending.

    For states U of shape (M, N) this is the spectrum of U' mass U / N.
    Values below 1e-14 times the largest are clipped to zero; the result
    always has length N.
    """
    u = states.states if isinstance(states, FomTrajectory) else np.asarray(states)
    n = u.shape[1]
    gram = u.T @ (mass @ u) / n
    vals = sla.eigh(gram, eigvals_only=True, check_finite=False)[::-1]
    vals = np.maximum(vals, 0.0)
    if vals.size and vals[0] > 0:
        vals[vals < _RANK_CUTOFF * vals[0]] = 0.0
    return np.ascontiguousarray(vals)


def tail_energy(
    trajectories: Sequence[np.ndarray | FomTrajectory],
    mass: sp.spmatrix,
    ell: int,
) -> float:
    """Worst discarded correlation energy when keeping ``ell`` modes.

    The maximum over trajectories of the sum of correlation eigenvalues
    past the first ``ell``. Zero when ``ell`` reaches the spectrum length.
    """
    if ell < 0:
        raise ValueError("mode count must be non-negative")
    worst = 0.0
    for traj in trajectories:
        vals = correlation_spectrum(traj, mass)
        worst = max(worst, float(vals[ell:].sum()))
    return worst


def pod_basis(states: np.ndarray, mass: sp.spmatrix, ell: int) -> np.ndarray:
    """Mass-orthonormal basis of the ``ell`` dominant snapshot directions.

    Built from the snapshot Gram matrix, so only dense eigenvalue work of
    size N is needed. Raises ValueError when ``ell`` exceeds the
    numerical rank of the snapshot set.
    """
    u = np.asarray(states, dtype=float)
    gram = u.T @ (mass @ u)
    vals, vecs = sla.eigh(gram, check_finite=False)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    vals = np.maximum(vals, 0.0)
    rank = int(np.count_nonzero(vals > _RANK_CUTOFF * vals[0])) if vals.size else 0
    if not 1 <= ell <= rank:
        raise ValueError(f"basis size {ell} exceeds numerical rank {rank}")
    return (u @ vecs[:, :ell]) / np.sqrt(vals[:ell])


def trajectory_error_sq(
    fom_states: np.ndarray,
    rom_states: np.ndarray,
    gram: sp.spmatrix,
    dt: float,
) -> float:
    """Squared discrete space-time error between two trajectories.

    dt times the sum over time steps of the gram-weighted squared error.
    With the H1 Gram matrix this is the squared space-time H1 norm used
    by all the accuracy studies.
    """
    diff = np.asarray(fom_states) - np.asarray(rom_states)
    return float(dt * np.sum(diff * (gram @ diff)))
