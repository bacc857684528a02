"""Local Lagrange interpolation in parameter space.

For each parameter axis, an interpolation scheme picks the ``p`` grid
nodes nearest to the query value and builds the Lagrange weights of that
stencil, stored as a dense weight vector over the full axis with exactly
``p`` nonzeros. Queries outside the grid's bounding box are rejected;
the scheme never extrapolates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .tensors import ParameterGrid


@dataclass(frozen=True)
class WeightVector:
    """Dense weight vector over one grid axis with a small support.

    ``values`` has one entry per grid node; ``support`` lists the indices
    of the stencil nodes (the only possibly nonzero entries). Weights sum
    to one for any Lagrange stencil.
    """

    values: np.ndarray
    support: tuple[int, ...]


@dataclass(frozen=True)
class InterpolationScheme:
    """Grid plus stencil size ``p`` (number of nodes, order p - 1)."""

    grid: ParameterGrid
    p: int

    def __post_init__(self) -> None:
        if self.p < 1:
            raise ValueError("stencil needs at least one node")
        for k in self.grid.counts:
            if self.p > k:
                raise ValueError(
                    f"stencil size {self.p} exceeds axis node count {k}"
                )


def lagrange_weights(value: float, nodes: np.ndarray, p: int) -> WeightVector:
    """Weights of the p-node Lagrange stencil nearest to ``value``.

    The stencil is the ``p`` nodes closest to ``value`` (ties resolved
    toward lower index). At a grid node the result is exactly the
    indicator of that node. Values outside [nodes[0], nodes[-1]] raise
    DomainError.
    """
    nodes = np.asarray(nodes, dtype=float)
    if not (nodes[0] <= value <= nodes[-1]):
        raise DomainError(
            f"value {value} outside grid range [{nodes[0]}, {nodes[-1]}]"
        )
    dist = np.abs(nodes - value)
    chosen = np.sort(np.argsort(dist, kind="stable")[:p])
    values = np.zeros(nodes.size)
    exact = np.flatnonzero(dist == 0.0)
    if exact.size:
        values[exact[0]] = 1.0
        return WeightVector(values=values, support=(int(exact[0]),))
    x = nodes[chosen]
    for k in range(p):
        others = np.delete(x, k)
        values[chosen[k]] = np.prod((value - others) / (x[k] - others))
    return WeightVector(values=values, support=tuple(int(i) for i in chosen))


def weight_vectors(
    alpha: Sequence[float], scheme: InterpolationScheme
) -> tuple[WeightVector, ...]:
    """One weight vector per parameter axis for the query point ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (scheme.grid.n_params,):
        raise DomainError(
            f"expected {scheme.grid.n_params} parameters, got shape {alpha.shape}"
        )
    return tuple(
        lagrange_weights(float(alpha[d]), scheme.grid.axes[d], scheme.p)
        for d in range(scheme.grid.n_params)
    )


def interpolate(
    values: np.ndarray, alpha: Sequence[float], scheme: InterpolationScheme
) -> float:
    """Interpolate a scalar field sampled on the scheme's grid.

    ``values`` has shape ``scheme.grid.counts``. Used as the plain-function
    reference for the in-tensor interpolation routines.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != scheme.grid.counts:
        raise ValueError("values shape does not match the grid")
    out = values
    for w in weight_vectors(alpha, scheme):
        out = np.tensordot(out, w.values, axes=([0], [0]))
    return float(out)
