"""Shared fixtures: small problem instances reused across test modules.

Session scope keeps the FOM solves that back the snapshot fixtures to a
few seconds in total; every fixture is deterministic.
"""

from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from lrtdrom import (
    TimeGrid,
    advdiff_problem,
    assemble_h1_gram,
    assemble_mass,
    build_mesh,
    generate_snapshots,
    heat_problem,
    uniform_grid,
)


@pytest.fixture(scope="session")
def heat():
    return heat_problem()


@pytest.fixture(scope="session")
def advdiff():
    return advdiff_problem()


@pytest.fixture(scope="session")
def heat_mesh(heat):
    return build_mesh(heat, 0.5)


@pytest.fixture(scope="session")
def heat_mass(heat_mesh):
    return assemble_mass(heat_mesh)


@pytest.fixture(scope="session")
def unit_mesh(advdiff):
    return build_mesh(advdiff, 0.25)


@pytest.fixture(scope="session")
def heat_desk(heat, heat_mesh, heat_mass):
    """Small end-to-end heat instance: 3x3 training grid, 20 time steps."""
    tg = TimeGrid(heat.final_time, 20)
    grid = uniform_grid(heat.box, (3, 3))
    tensor = generate_snapshots(heat, heat_mesh, tg, grid)
    return SimpleNamespace(
        problem=heat,
        mesh=heat_mesh,
        tg=tg,
        grid=grid,
        tensor=tensor,
        mass=heat_mass,
        gram=assemble_h1_gram(heat_mesh),
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(20240915)
